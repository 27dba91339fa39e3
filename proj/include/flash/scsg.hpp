#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flash/problem.hpp"
#include "flash/rng.hpp"
#include "flash/statistics.hpp"

namespace flash {

// Variance-reduced epochs.  One epoch anchors a batch gradient g at x0, then
// runs a geometrically distributed number of corrected inner steps
//   x_t = x_{t-1} - eta (grad_I(x_{t-1}) - grad_I(x0) + g),
// resampling the inner batch I fresh each step.  The epoch length
// T ~ Geom(B / (B + b)) has mean B / b, which is what makes the telescoping
// progress argument work in expectation.

template <typename Scalar>
struct ScsgConfig {
  Index outer_batch = 0;  // anchor batch size B
  Index inner_batch = 1;  // correction batch size b
  Scalar step_size = 0;   // eta
  Index num_epochs = 1;
  Index cap_factor = 50;  // epoch length hard cap, as a multiple of B / b

  // Standard tuning: eta = b^(2/3) / (6 L1 B^(2/3)), i.e. step ratio 1/6.
  static ScsgConfig from_constants(Scalar grad_lipschitz, Index outer_batch,
                                   Index inner_batch = 1) {
    ScsgConfig c;
    c.outer_batch = outer_batch;
    c.inner_batch = inner_batch;
    c.step_size = std::pow(Scalar(inner_batch), Scalar(2) / 3) /
                  (6 * grad_lipschitz * std::pow(Scalar(outer_batch), Scalar(2) / 3));
    c.validate();
    return c;
  }

  // gamma = eta L1 (B / b)^(2/3); the progress bound needs gamma <= 1/6.
  Scalar step_ratio(Scalar grad_lipschitz) const {
    return step_size * grad_lipschitz *
           std::pow(Scalar(outer_batch) / Scalar(inner_batch), Scalar(2) / 3);
  }

  void validate() const {
    if (outer_batch < 1) throw std::invalid_argument("ScsgConfig: outer_batch must be >= 1");
    if (inner_batch < 1 || inner_batch > outer_batch)
      throw std::invalid_argument("ScsgConfig: need 1 <= inner_batch <= outer_batch");
    if (!(step_size > 0)) throw std::invalid_argument("ScsgConfig: step_size must be positive");
    if (num_epochs < 1) throw std::invalid_argument("ScsgConfig: num_epochs must be >= 1");
    if (cap_factor < 1) throw std::invalid_argument("ScsgConfig: cap_factor must be >= 1");
  }
};

// Sample from P(T = k) = p^k (1 - p), k >= 0, by inverting the CDF with a
// single uniform draw.  p = 0 gives the point mass at 0; p >= 1 is an error.
inline Index geometric_sample(double p, Rng& rng) {
  if (p < 0 || p >= 1) throw std::invalid_argument("geometric_sample: p must lie in [0, 1)");
  if (p == 0) return 0;
  const double u = rng.uniform_open();
  const double k = std::floor(std::log(u) / std::log(p));
  return static_cast<Index>(k);
}

template <typename Scalar>
struct EpochOutput {
  Vector<Scalar> x_out;
  Index inner_length = 0;  // T
  bool length_capped = false;
  EvalCounters consumed;   // cost added by this call
};

// One epoch.  When `anchor` is given it must be the batch gradient at x0 and
// its cost is the caller's; otherwise the epoch draws the anchor itself,
// consuming outer_batch gradient units.  Inner steps consume 2 inner_batch
// units each, so a self-anchored epoch costs exactly B + 2 b T.
template <typename Scalar>
EpochOutput<Scalar> scsg_epoch(const Problem<Scalar>& p, const Vector<Scalar>& x0,
                               const ScsgConfig<Scalar>& config,
                               const Vector<Scalar>* anchor, Rng& rng,
                               EvalCounters* counters = nullptr) {
  config.validate();
  EvalCounters local;

  Vector<Scalar> g = anchor ? *anchor
                            : subsampled_gradient(p, x0, config.outer_batch, rng, &local);

  const double geom_p =
      double(config.outer_batch) / double(config.outer_batch + config.inner_batch);
  EpochOutput<Scalar> out;
  out.inner_length = geometric_sample(geom_p, rng);
  const Index cap = (config.cap_factor * config.outer_batch) / config.inner_batch;
  if (out.inner_length > cap) {
    out.inner_length = cap;
    out.length_capped = true;
  }

  Vector<Scalar> x = x0;
  std::vector<std::uint64_t> ids(static_cast<std::size_t>(config.inner_batch));
  for (Index t = 0; t < out.inner_length; ++t) {
    for (auto& id : ids) id = p.sample_component(rng);
    const Vector<Scalar> at_x = batch_gradient(p, x, ids, &local);
    const Vector<Scalar> at_x0 = batch_gradient(p, x0, ids, &local);
    x -= config.step_size * (at_x - at_x0 + g);
  }

  out.x_out = std::move(x);
  out.consumed = local;
  if (counters) *counters += local;
  return out;
}

template <typename Scalar>
struct ScsgRunResult {
  Vector<Scalar> x_final;     // last epoch output
  Vector<Scalar> x_selected;  // uniformly chosen epoch output
  Index selected_epoch = 0;   // 1-based
  Index epochs_run = 0;
  EvalCounters consumed;
};

// num_epochs self-anchored epochs in sequence.  The selected iterate is drawn
// uniformly over epoch outputs, matching the randomized output rule under
// which the progress bound controls the expected gradient norm.
template <typename Scalar>
ScsgRunResult<Scalar> scsg_run(const Problem<Scalar>& p, const Vector<Scalar>& x0,
                               const ScsgConfig<Scalar>& config, Rng& rng,
                               EvalCounters* counters = nullptr) {
  config.validate();
  ScsgRunResult<Scalar> out;
  std::vector<Vector<Scalar>> iterates;
  iterates.reserve(static_cast<std::size_t>(config.num_epochs));

  Vector<Scalar> x = x0;
  for (Index k = 0; k < config.num_epochs; ++k) {
    EpochOutput<Scalar> epoch = scsg_epoch<Scalar>(p, x, config, nullptr, rng, counters);
    out.consumed += epoch.consumed;
    x = std::move(epoch.x_out);
    p.domain().project(x);
    iterates.push_back(x);
  }
  out.epochs_run = config.num_epochs;
  out.x_final = iterates.back();
  const Index pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(config.num_epochs)));
  out.selected_epoch = pick + 1;
  out.x_selected = iterates[static_cast<std::size_t>(pick)];
  return out;
}

// One observation for the epoch progress check: exact objective values at the
// epoch start and output, and the exact squared gradient norm at the output.
template <typename Scalar>
struct EpochSample {
  Scalar f_start = 0;
  Scalar f_end = 0;
  Scalar grad_sq = 0;
};

template <typename Scalar>
struct ProgressReport {
  Index samples = 0;
  Scalar mean_grad_sq = 0;
  Scalar mean_decrease = 0;
  Scalar rate = 0;      // multiplies the mean decrease
  Scalar additive = 0;  // subsampling noise term
  Scalar mean_margin = 0;
  Scalar margin_se = 0;
  Scalar slack = 0;
  bool asserted = false;
  bool pass = false;
  std::string reason;
};

// Checks the per-epoch progress bound
//   E ||grad f(x_out)||^2 <= (5 L1 / gamma) (b / B)^(1/3) E[f(x0) - f(x_out)]
//                            + 6 V / B  (only when the anchor subsamples)
// against observed epochs, allowing `z` standard errors of slack.  Refuses to
// assert (rather than passing vacuously) on fewer than 30 samples, B < 9, or
// step ratio above 1/6.
template <typename Scalar>
ProgressReport<Scalar> epoch_progress_check(const std::vector<EpochSample<Scalar>>& samples,
                                            const ScsgConfig<Scalar>& config,
                                            const SmoothnessConstants<Scalar>& consts,
                                            Index finite_sum_n, Scalar z = Scalar(2.58)) {
  config.validate();
  consts.validate();
  ProgressReport<Scalar> report;
  report.samples = static_cast<Index>(samples.size());

  const Scalar gamma = config.step_ratio(consts.grad_lipschitz);
  if (report.samples < 30) {
    report.reason = "need at least 30 epoch samples";
    return report;
  }
  if (config.outer_batch < 9) {
    report.reason = "progress bound requires outer_batch >= 9";
    return report;
  }
  if (gamma > Scalar(1) / 6 + Scalar(1e-9)) {
    report.reason = "progress bound requires step ratio <= 1/6";
    return report;
  }

  report.rate = 5 * consts.grad_lipschitz / gamma *
                std::pow(Scalar(config.inner_batch) / Scalar(config.outer_batch),
                         Scalar(1) / 3);
  const bool subsampled = finite_sum_n == 0 || config.outer_batch < finite_sum_n;
  report.additive = subsampled ? 6 * consts.variance_bound / Scalar(config.outer_batch)
                               : Scalar(0);

  std::vector<double> margins;
  margins.reserve(samples.size());
  double grad_sq_acc = 0, decrease_acc = 0;
  for (const auto& s : samples) {
    const double margin =
        double(s.grad_sq) -
        double(report.rate) * (double(s.f_start) - double(s.f_end)) - double(report.additive);
    margins.push_back(margin);
    grad_sq_acc += double(s.grad_sq);
    decrease_acc += double(s.f_start) - double(s.f_end);
  }
  report.mean_grad_sq = Scalar(grad_sq_acc / double(samples.size()));
  report.mean_decrease = Scalar(decrease_acc / double(samples.size()));
  report.mean_margin = Scalar(mean_of(margins));
  report.margin_se = Scalar(standard_error(margins));
  report.slack = z * report.margin_se;
  report.asserted = true;
  report.pass = report.mean_margin <= report.slack + Scalar(1e-12);
  return report;
}

}  // namespace flash
