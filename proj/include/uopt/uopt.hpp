#pragma once

// Umbrella header: learned approximated-iteration solvers, flop models,
// datagen, training, and the experiment driver.

#include "uopt/apga.hpp"
#include "uopt/checkpoint.hpp"
#include "uopt/commands.hpp"
#include "uopt/common.hpp"
#include "uopt/datagen.hpp"
#include "uopt/experiment.hpp"
#include "uopt/flops.hpp"
#include "uopt/gd_quadratic.hpp"
#include "uopt/larpca.hpp"
#include "uopt/linalg.hpp"
#include "uopt/risk.hpp"
#include "uopt/rng.hpp"
#include "uopt/schedule.hpp"
