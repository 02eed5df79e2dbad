#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "uopt/schedule.hpp"

namespace uopt {

enum class DatasetKind { unsupervised, supervised };

template <class Context, class Label>
struct Dataset {
  DatasetKind kind = DatasetKind::unsupervised;
  std::vector<std::pair<Context, std::optional<Label>>> samples;

  std::size_t size() const { return samples.size(); }
};

enum class GradMode { finite_difference, analytic_adjoint };

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 1;
  int batch_size = 1;
  std::uint64_t seed = 0;
  GradMode grad_mode = GradMode::finite_difference;
  std::set<std::string> clamp_nonnegative;  // parameter labels held >= 0
  double momentum = 0.0;
  double fd_step = 1e-5;
};

// A solver drives these generic routines by providing:
//   Context / Decision / Label typedefs,
//   Decision forward(const HyperSchedule&, const Context&) const,
//   double objective(const Decision&, const Context&) const,
// plus, for supervised training, double task_loss(const Decision&, const Label&),
// and optionally an analytic per-sample risk gradient
//   HyperSchedule adjoint_risk_gradient(const HyperSchedule&, const Context&,
//                                       const std::optional<Label>&, DatasetKind).

template <class S>
concept SupervisedCapable = requires(const S s, const typename S::Decision d,
                                     const typename S::Label y) {
  { s.task_loss(d, y) } -> std::convertible_to<double>;
};

template <class S>
concept AdjointCapable =
    requires(const S s, const HyperSchedule p, const typename S::Context x,
             const std::optional<typename S::Label> y, DatasetKind kind) {
      { s.adjoint_risk_gradient(p, x, y, kind) } -> std::same_as<HyperSchedule>;
    };

// Mean self-declared objective of the solver's decisions over the data.
template <class S, class C, class L>
double unsup_risk(const S& solver, const HyperSchedule& params,
                  const Dataset<C, L>& data) {
  if (data.samples.empty()) throw ParameterError("unsup_risk: empty dataset");
  double acc = 0.0;
  for (const auto& [x, y] : data.samples)
    acc += solver.objective(solver.forward(params, x), x);
  return acc / static_cast<double>(data.samples.size());
}

// Mean task loss against ground-truth labels.
template <class S, class C, class L, class Loss>
double sup_risk(const S& solver, const HyperSchedule& params,
                const Dataset<C, L>& data, Loss&& task_loss) {
  if (data.samples.empty()) throw ParameterError("sup_risk: empty dataset");
  double acc = 0.0;
  for (const auto& [x, y] : data.samples) {
    if (!y) throw ParameterError("sup_risk: sample without a label");
    acc += task_loss(solver.forward(params, x), *y);
  }
  return acc / static_cast<double>(data.samples.size());
}

template <class S, class C, class L>
double dataset_risk(const S& solver, const HyperSchedule& params,
                    const Dataset<C, L>& data) {
  if (data.kind == DatasetKind::unsupervised)
    return unsup_risk(solver, params, data);
  if constexpr (SupervisedCapable<S>) {
    return sup_risk(solver, params, data,
                    [&](const auto& d, const auto& y) { return solver.task_loss(d, y); });
  } else {
    throw ParameterError("dataset_risk: solver has no task loss for supervised data");
  }
}

// Central-difference gradient of an arbitrary risk functional of the schedule.
// Complex entries are treated as (re, im) component pairs so that a plain
// subtract-the-gradient update descends in both components.
template <class Risk>
HyperSchedule fd_hypergradient(const HyperSchedule& params, Risk&& risk, double h) {
  if (!(h > 0.0)) throw ParameterError("fd_hypergradient: step must be > 0");
  HyperSchedule grad = zeros_like(params);
  std::vector<double> flat = pack_schedule(params);
  HyperSchedule probe = params;
  std::vector<double> gflat(flat.size(), 0.0);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double base = flat[i];
    flat[i] = base + h;
    unpack_schedule(probe, flat);
    const double fp = risk(static_cast<const HyperSchedule&>(probe));
    flat[i] = base - h;
    unpack_schedule(probe, flat);
    const double fm = risk(static_cast<const HyperSchedule&>(probe));
    flat[i] = base;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("fd_hypergradient: non-finite risk while probing " +
                         describe_component(params, i));
    gflat[i] = (fp - fm) / (2.0 * h);
  }
  unpack_schedule(probe, flat);  // restore
  unpack_schedule(grad, gflat);
  return grad;
}

namespace detail {

inline void axpy_schedule(HyperSchedule& acc, const HyperSchedule& g, double w) {
  for (int k = 0; k < acc.k_total(); ++k) {
    auto ia = acc.per_iteration[k].values.begin();
    auto ig = g.per_iteration[k].values.begin();
    for (; ia != acc.per_iteration[k].values.end(); ++ia, ++ig) {
      if (param_is_complex(ia->second))
        std::get<ComplexMatrix>(ia->second) += w * std::get<ComplexMatrix>(ig->second);
      else
        std::get<RealMatrix>(ia->second) += w * std::get<RealMatrix>(ig->second);
    }
  }
}

}  // namespace detail

// Gradient of the batch risk with respect to every schedule component.
template <class S, class C, class L>
HyperSchedule hypergradient(const S& solver, const HyperSchedule& params,
                            const Dataset<C, L>& batch, GradMode mode,
                            double fd_step = 1e-5) {
  if (batch.samples.empty()) throw ParameterError("hypergradient: empty batch");
  if (mode == GradMode::finite_difference) {
    return fd_hypergradient(
        params, [&](const HyperSchedule& p) { return dataset_risk(solver, p, batch); },
        fd_step);
  }
  if constexpr (AdjointCapable<S>) {
    HyperSchedule acc = zeros_like(params);
    const double w = 1.0 / static_cast<double>(batch.samples.size());
    for (const auto& [x, y] : batch.samples)
      detail::axpy_schedule(acc, solver.adjoint_risk_gradient(params, x, y, batch.kind), w);
    return acc;
  } else {
    throw ParameterError("hypergradient: solver provides no analytic adjoint");
  }
}

struct TrainResult {
  HyperSchedule params;
  double final_risk = 0.0;
  std::vector<double> epoch_risks;
  bool aborted = false;
  std::string diagnostic;
};

namespace detail {

inline void clamp_labels(HyperSchedule& s, const std::set<std::string>& labels) {
  for (auto& bundle : s.per_iteration)
    for (auto& [label, p] : bundle.values)
      if (labels.count(label) && !param_is_complex(p)) {
        auto& m = std::get<RealMatrix>(p);
        m = m.cwiseMax(0.0);
      }
}

}  // namespace detail

// Mini-batch SGD over the schedule: each epoch shuffles the sample order with
// the seeded generator, partitions it into batches, and applies
// theta <- theta - rho * grad (with optional heavy-ball momentum), then clamps
// the configured labels at zero. Aborts, keeping the last finite iterate, if
// the risk or an update stops being finite.
template <class S, class C, class L>
TrainResult sgd_train(const S& solver, const HyperSchedule& init,
                      const Dataset<C, L>& data, const TrainConfig& cfg) {
  if (data.samples.empty()) throw ParameterError("sgd_train: empty dataset");
  if (cfg.epochs < 0) throw ParameterError("sgd_train: negative epoch count");
  if (cfg.batch_size < 1) throw ParameterError("sgd_train: batch size must be >= 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw ParameterError("sgd_train: bad learning rate");

  TrainResult result;
  result.params = init;
  detail::clamp_labels(result.params, cfg.clamp_nonnegative);

  std::vector<double> theta = pack_schedule(result.params);
  std::vector<double> velocity(theta.size(), 0.0);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      Dataset<C, L> batch;
      batch.kind = data.kind;
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = start; i < stop; ++i)
        batch.samples.push_back(data.samples[order[i]]);

      HyperSchedule grad;
      try {
        grad = hypergradient(solver, result.params, batch, cfg.grad_mode, cfg.fd_step);
      } catch (const NumericError& e) {
        result.aborted = true;
        result.diagnostic = e.what();
        result.final_risk = result.epoch_risks.empty()
                                ? std::numeric_limits<double>::quiet_NaN()
                                : result.epoch_risks.back();
        return result;
      }

      std::vector<double> gflat = pack_schedule(grad);
      bool finite = true;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] + gflat[i];
        theta[i] -= cfg.learning_rate * velocity[i];
        finite = finite && std::isfinite(theta[i]);
      }
      if (!finite) {
        result.aborted = true;
        result.diagnostic = "sgd_train: parameters became non-finite after update";
        result.final_risk = result.epoch_risks.empty()
                                ? std::numeric_limits<double>::quiet_NaN()
                                : result.epoch_risks.back();
        return result;
      }
      unpack_schedule(result.params, theta);
      detail::clamp_labels(result.params, cfg.clamp_nonnegative);
      theta = pack_schedule(result.params);
    }

    double risk;
    try {
      risk = dataset_risk(solver, result.params, data);
    } catch (const NumericError& e) {
      result.aborted = true;
      result.diagnostic = e.what();
      result.final_risk = std::numeric_limits<double>::quiet_NaN();
      return result;
    }
    if (!std::isfinite(risk)) {
      result.aborted = true;
      result.diagnostic = "sgd_train: training risk became non-finite at epoch " +
                          std::to_string(epoch);
      result.final_risk = risk;
      return result;
    }
    result.epoch_risks.push_back(risk);
  }

  result.final_risk = result.epoch_risks.empty()
                          ? dataset_risk(solver, result.params, data)
                          : result.epoch_risks.back();
  return result;
}

}  // namespace uopt
