#include "mlnc/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mlnc/random.hpp"

namespace mlnc {

namespace {

ModelState random_direction(const ModelState& like, GaussianStream& gauss) {
  ModelState v = ModelState::zeros_like(like);
  for (Eigen::Index r = 0; r < v.W.rows(); ++r)
    for (Eigen::Index c = 0; c < v.W.cols(); ++c) v.W(r, c) = gauss.next();
  for (Eigen::Index c = 0; c < v.H.cols(); ++c)
    for (Eigen::Index r = 0; r < v.H.rows(); ++r) v.H(r, c) = gauss.next();
  for (Eigen::Index k = 0; k < v.b.size(); ++k) v.b(k) = gauss.next();
  return v;
}

void project_out(ModelState& v, const std::vector<ModelState>& basis) {
  for (const ModelState& u : basis) v -= v.dot(u) * u;
}

bool normalize(ModelState& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) return false;
  v *= 1.0 / n;
  return true;
}

}  // namespace

EigenEstimate min_eigenvalue(const ModelState& state, const Dataset& data, const Hyperparams& hp, int iters, double tol,
                             std::uint64_t seed, const std::vector<ModelState>& deflate) {
  check_shapes(state, data, hp);
  if (iters <= 0) throw std::invalid_argument("min_eigenvalue: iters must be positive");
  auto hvp = [&](const ModelState& v) { return hessian_vector_product(state, data, hp, v); };
  GaussianStream gauss(seed);
  EigenEstimate est;

  // dominant eigenvalue
  ModelState v = random_direction(state, gauss);
  normalize(v);
  double dom = 0.0;
  for (int it = 0; it < 2000; ++it) {
    ModelState hv = hvp(v);
    const double next = v.dot(hv);
    const double hv_norm = hv.norm();
    if (!(hv_norm > 0.0)) break;
    const bool settled = it > 10 && std::abs(hv_norm - std::abs(dom)) <= 1e-10 * hv_norm;
    dom = next >= 0.0 ? hv_norm : -hv_norm;
    hv *= 1.0 / hv_norm;
    v = std::move(hv);
    if (settled) break;
  }
  est.lambda_max = dom;
  est.shift = 1.01 * std::abs(dom) + 1e-12;
  const double scale = 1.0 + std::abs(dom);

  v = random_direction(state, gauss);
  project_out(v, deflate);
  if (!normalize(v)) throw std::invalid_argument("min_eigenvalue: deflation exhausts the space");
  for (int it = 0; it < iters; ++it) {
    est.iterations = it + 1;
    const ModelState hv = hvp(v);
    est.lambda = v.dot(hv);
    ModelState res = hv;
    res -= est.lambda * v;
    project_out(res, deflate);
    est.residual = res.norm();
    if (est.residual <= tol * scale) {
      est.converged = true;
      break;
    }
    ModelState next = est.shift * v;
    next -= hv;
    project_out(next, deflate);
    if (!normalize(next)) break;
    v = std::move(next);
  }
  est.direction = std::move(v);
  return est;
}

HvpCheck hvp_self_check(const ModelState& state, const Dataset& data, const Hyperparams& hp, std::uint64_t seed) {
  GaussianStream gauss(seed);
  ModelState u = random_direction(state, gauss);
  ModelState v = random_direction(state, gauss);
  normalize(u);
  normalize(v);
  const ModelState hu = hessian_vector_product(state, data, hp, u);
  const ModelState hv = hessian_vector_product(state, data, hp, v);
  HvpCheck out;
  const double denom = u.norm() * hv.norm() + v.norm() * hu.norm();
  out.symmetry = denom > 0.0 ? std::abs(u.dot(hv) - v.dot(hu)) / denom : 0.0;

  const double eps = 1e-5 * std::max(1.0, state.norm());
  const ModelState gp = gradient(state + eps * v, data, hp);
  const ModelState gm = gradient(state - eps * v, data, hp);
  ModelState fd = gp - gm;
  fd *= 1.0 / (2.0 * eps);
  const double scale = std::max(hv.norm(), 1e-12);
  out.finite_diff = (fd - hv).norm() / scale;
  out.passed = out.symmetry <= 1e-10 && out.finite_diff <= 1e-4;
  return out;
}

std::string_view to_string(CurvatureClass c) {
  switch (c) {
    case CurvatureClass::approx_global_minimum:
      return "approx-global-minimum";
    case CurvatureClass::strict_saddle:
      return "strict-saddle";
    case CurvatureClass::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

CurvatureReport probe(const ModelState& state, const Dataset& data, const Hyperparams& hp, const ProbeConfig& cfg,
                      std::optional<double> f_global) {
  check_shapes(state, data, hp);
  if (hp.d <= data.K()) throw std::invalid_argument("probe: the landscape probe requires d > K");

  CurvatureReport rep;
  const Evaluation eval = evaluate(state, data, hp);
  rep.f = eval.f;
  rep.grad_norm = eval.grad.norm();
  rep.is_critical = rep.grad_norm <= cfg.grad_tol;
  if (!f_global && data.config().is_balanced()) f_global = global_objective(data, hp);
  rep.f_global = f_global;

  rep.hvp = hvp_self_check(state, data, hp);
  if (!rep.hvp.passed) return rep;

  EigenEstimate est = min_eigenvalue(state, data, hp, cfg.iters, cfg.eig_tol, cfg.seed);
  rep.lambda_min_estimate = est.lambda;
  rep.lambda_max_estimate = est.lambda_max;
  rep.eigvec_residual = est.residual;
  rep.eigen_converged = est.converged;
  rep.curvature_margin = 1e-6 * (1.0 + std::abs(est.lambda_max));
  rep.direction = est.direction;
  if (!rep.is_critical) return rep;

  // A Rayleigh quotient bounds lambda_min from above, so a negative one
  // certifies the saddle whether or not the iteration settled.
  if (est.lambda < -rep.curvature_margin) {
    rep.classification = CurvatureClass::strict_saddle;
    return rep;
  }
  if (!est.converged) return rep;

  std::vector<ModelState> found;
  EigenEstimate cur = est;
  while (cur.converged && std::abs(cur.lambda) <= rep.curvature_margin &&
         rep.near_zero_directions < cfg.max_zero_directions) {
    ++rep.near_zero_directions;
    found.push_back(cur.direction);
    cur = min_eigenvalue(state, data, hp, cfg.iters, cfg.eig_tol, cfg.seed + found.size(), found);
  }

  if (f_global && std::abs(rep.f - *f_global) <= cfg.f_tol * std::abs(*f_global))
    rep.classification = CurvatureClass::approx_global_minimum;
  return rep;
}

EscapeReport escape_test(const ModelState& saddle, const Dataset& data, const Hyperparams& hp,
                         const CurvatureReport& saddle_probe, const TrainConfig& cfg, const VerifyTolerances& tol) {
  if (saddle_probe.classification != CurvatureClass::strict_saddle)
    throw std::invalid_argument("escape_test: the probe did not find a strict saddle");
  if (!saddle.same_shape(saddle_probe.direction))
    throw std::invalid_argument("escape_test: probe direction does not match the state");

  EscapeReport rep;
  rep.f_saddle = objective(saddle, data, hp);
  const double norm = saddle.norm();
  rep.perturbation = norm > 0.0 ? 1e-3 * norm : 1e-3;
  ModelState v = saddle_probe.direction;
  normalize(v);
  const ModelState plus = saddle + rep.perturbation * v;
  const ModelState minus = saddle - rep.perturbation * v;
  rep.f_plus = objective(plus, data, hp);
  rep.f_minus = objective(minus, data, hp);
  rep.both_decrease = rep.f_plus < rep.f_saddle && rep.f_minus < rep.f_saddle;

  ModelState endpoint;
  try {
    rep.trajectory = train(plus, data, hp, cfg);
    endpoint = rep.trajectory.final_state;
  } catch (const DivergenceError& e) {
    rep.diverged = true;
    rep.trajectory = e.trajectory;
    endpoint = e.last_state;
  }
  rep.f_final = objective(endpoint, data, hp);
  rep.descended = rep.f_final < rep.f_saddle;
  rep.verification = verify_global(endpoint, data, hp, tol);
  return rep;
}

}  // namespace mlnc
