#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mlnc/errors.hpp"
#include "mlnc/labelspace.hpp"
#include "mlnc/metrics.hpp"
#include "mlnc/ufm.hpp"

namespace mlnc {

struct TrainConfig {
  std::int64_t max_iters = 200000;
  double step_size = 0.5;
  double momentum = 0.9;
  double grad_tol = 1e-8;
  std::uint64_t seed = 0;
  double init_scale = 0.1;
  /// Record cadence in iterations; iteration 0 and the final iterate are always recorded.
  std::int64_t log_every = 100;
  /// Attach a MetricReport to each record.
  bool record_metrics = true;
  /// Give up once step halving drives the step below this.
  double min_step = 1e-30;

  void validate() const;
};

struct TrajectoryRecord {
  std::int64_t iteration = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  std::optional<MetricReport> metrics;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  ModelState final_state;
  bool converged = false;
  std::int64_t iterations = 0;
  double final_step = 0.0;
  std::int64_t step_halvings = 0;
};

/// Raised when training cannot continue; carries the last finite iterate.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, ModelState last, Trajectory partial)
      : NumericError(what), last_state(std::move(last)), trajectory(std::move(partial)) {}
  ModelState last_state;
  Trajectory trajectory;
};

/// W and H entries i.i.d. N(0, (init_scale / sqrt(d))^2), b = 0.
///
/// The generator is std::mt19937_64 seeded with `seed`; each normal draw is a
/// Box-Muller transform of two 53-bit uniforms (u1 in (0,1], u2 in [0,1)),
/// using the cosine branch only. W is filled row-major first, then H
/// column-major. This fixes the stream independently of the standard
/// library's distribution implementations.
ModelState init_state(const Dataset& data, const Hyperparams& hp, std::uint64_t seed, double init_scale);

/// Heavy-ball gradient descent with step halving. A step is accepted when it
/// does not raise f beyond evaluation round-off (see kRoundoffSlack); on
/// rejection the velocity is cleared and the step halved. Stops once the
/// gradient norm over all blocks is <= grad_tol or after max_iters.
Trajectory train(ModelState state0, const Dataset& data, const Hyperparams& hp, const TrainConfig& cfg);

/// Relative slack (in units of |f|) allowed when comparing objective values.
inline constexpr double kRoundoffSlack = 8.0 * 2.220446049250313e-16;

struct BalanceReport {
  double residual = 0.0;          // |W^T W - (lH/lW) H H^T|_F / max(|W^T W|_F, |(lH/lW) H H^T|_F)
  double rho = 0.0;               // |W|_F^2
  double h_norm_sq = 0.0;         // |H|_F^2
  double h_norm_identity = 0.0;   // | |H|_F^2 - (lW/lH) rho | / max(|H|_F^2, (lW/lH) rho)
  bool passed = false;
};

BalanceReport check_balance(const ModelState& state, const Hyperparams& hp, double tol);

struct SeedSweep {
  std::vector<std::uint64_t> seeds;
  std::vector<Trajectory> runs;
  std::size_t best = 0;
  /// (max f - min f) / |min f| over the final objectives.
  double f_spread = 0.0;
};

/// One run per seed from init_state(seed, cfg.init_scale); best = lowest final f.
SeedSweep train_seeds(const Dataset& data, const Hyperparams& hp, const TrainConfig& cfg,
                      const std::vector<std::uint64_t>& seeds);

}  // namespace mlnc
