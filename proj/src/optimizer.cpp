#include "mlnc/optimizer.hpp"

#include "mlnc/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mlnc {

void TrainConfig::validate() const {
  if (max_iters <= 0) throw std::invalid_argument("TrainConfig: max_iters must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("TrainConfig: step_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
  if (!(grad_tol > 0.0)) throw std::invalid_argument("TrainConfig: grad_tol must be positive");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("TrainConfig: init_scale must be nonnegative");
  if (log_every <= 0) throw std::invalid_argument("TrainConfig: log_every must be positive");
}

namespace {

TrajectoryRecord make_record(std::int64_t it, const Evaluation& eval, const ModelState& state, const Dataset& data,
                             bool with_metrics) {
  TrajectoryRecord rec{it, eval.f, eval.grad.norm(), std::nullopt};
  if (with_metrics) rec.metrics = compute_metrics(state, data);
  return rec;
}

}  // namespace

ModelState init_state(const Dataset& data, const Hyperparams& hp, std::uint64_t seed, double init_scale) {
  ModelState s = ModelState::zeros(data.K(), hp.d, data.size());
  GaussianStream gauss(seed);
  const double sigma = init_scale / std::sqrt(static_cast<double>(hp.d));
  for (Eigen::Index r = 0; r < s.W.rows(); ++r)
    for (Eigen::Index c = 0; c < s.W.cols(); ++c) s.W(r, c) = sigma * gauss.next();
  for (Eigen::Index c = 0; c < s.H.cols(); ++c)
    for (Eigen::Index r = 0; r < s.H.rows(); ++r) s.H(r, c) = sigma * gauss.next();
  return s;
}

Trajectory train(ModelState state, const Dataset& data, const Hyperparams& hp, const TrainConfig& cfg) {
  cfg.validate();
  hp.validate();
  check_shapes(state, data, hp);

  Trajectory traj;
  if (!state.all_finite()) throw DivergenceError("initial state is not finite", state, traj);
  Evaluation eval = evaluate(state, data, hp);
  if (!std::isfinite(eval.f) || !eval.grad.all_finite()) {
    throw DivergenceError("objective is not finite at the initial state", state, traj);
  }

  ModelState velocity = ModelState::zeros_like(state);
  bool velocity_zero = true;
  double step = cfg.step_size;
  std::int64_t it = 0;

  for (;; ++it) {
    const double gnorm = eval.grad.norm();
    const bool done = gnorm <= cfg.grad_tol || it >= cfg.max_iters;
    if (it % cfg.log_every == 0 || done) {
      traj.records.push_back(make_record(it, eval, state, data, cfg.record_metrics));
    }
    if (done) {
      traj.converged = gnorm <= cfg.grad_tol;
      break;
    }

    while (true) {
      ModelState next_velocity = cfg.momentum * velocity;
      next_velocity -= step * eval.grad;
      ModelState candidate = state + next_velocity;

      bool accepted = false;
      Evaluation next;
      if (candidate.all_finite()) {
        try {
          next = evaluate(candidate, data, hp);
          accepted = std::isfinite(next.f) && next.grad.all_finite() &&
                     next.f <= eval.f + kRoundoffSlack * std::abs(eval.f);
        } catch (const NumericError&) {
          accepted = false;
        }
      }
      if (accepted) {
        state = std::move(candidate);
        velocity = std::move(next_velocity);
        velocity_zero = false;
        eval = std::move(next);
        break;
      }
      if (!velocity_zero) {
        // retry the same step as plain gradient descent before shrinking it
        velocity = ModelState::zeros_like(state);
        velocity_zero = true;
        continue;
      }
      step *= 0.5;
      ++traj.step_halvings;
      if (step < cfg.min_step) {
        traj.final_state = state;
        traj.iterations = it;
        traj.final_step = step;
        throw DivergenceError("step size underflow: no descent step found", state, traj);
      }
    }
  }

  traj.final_state = std::move(state);
  traj.iterations = it;
  traj.final_step = step;
  return traj;
}

BalanceReport check_balance(const ModelState& state, const Hyperparams& hp, double tol) {
  BalanceReport r;
  const double ratio = hp.lambda_H / hp.lambda_W;
  const Eigen::MatrixXd wtw = state.W.transpose() * state.W;
  const Eigen::MatrixXd hht = ratio * (state.H * state.H.transpose());
  const double scale = std::max(wtw.norm(), hht.norm());
  r.residual = scale > 0.0 ? (wtw - hht).norm() / scale : 0.0;
  r.rho = state.W.squaredNorm();
  r.h_norm_sq = state.H.squaredNorm();
  const double predicted = r.rho / ratio;
  const double h_scale = std::max(r.h_norm_sq, predicted);
  r.h_norm_identity = h_scale > 0.0 ? std::abs(r.h_norm_sq - predicted) / h_scale : 0.0;
  r.passed = r.residual <= tol && r.h_norm_identity <= tol;
  return r;
}

SeedSweep train_seeds(const Dataset& data, const Hyperparams& hp, const TrainConfig& cfg,
                      const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("train_seeds: need at least one seed");
  SeedSweep sweep;
  sweep.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    sweep.runs.push_back(train(init_state(data, hp, seed, cfg.init_scale), data, hp, run_cfg));
  }
  double lo = sweep.runs.front().records.back().f;
  double hi = lo;
  for (std::size_t j = 0; j < sweep.runs.size(); ++j) {
    const double f = sweep.runs[j].records.back().f;
    if (f < sweep.runs[sweep.best].records.back().f) sweep.best = j;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  sweep.f_spread = lo != 0.0 ? (hi - lo) / std::abs(lo) : hi - lo;
  return sweep;
}

}  // namespace mlnc
