#include "mlnc/theory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/LU>

#include "mlnc/errors.hpp"
#include "mlnc/random.hpp"

namespace mlnc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNewtonTarget = 1e-11;

double ratio_or_inf(double num, double den) {
  if (num == 0.0) return 0.0;
  if (!(den > 0.0) || !std::isfinite(num)) return kInf;
  return num / den;
}

double gap_of(int K, int m, double c) { return std::log(static_cast<double>(K - m) * c / m); }
double c_of_gap(int K, int m, double gap) { return static_cast<double>(m) / (K - m) * std::exp(gap); }
// gamma1_m written through the gap, exact for gaps near zero.
double gamma_of_gap(int K, int m, double gap) { return m / (static_cast<double>(K - m) + m * std::exp(gap)); }

std::string tagged(std::string_view base, int m) { return std::string(base) + "_m" + std::to_string(m); }

}  // namespace

EtfFrame simplex_etf(int K, int d, double rho, std::uint64_t rotation_seed) {
  if (K < 2) throw std::invalid_argument("simplex_etf: K must be at least 2");
  if (d < K - 1) throw std::invalid_argument("simplex_etf: d must be at least K-1 to embed a K-simplex");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("simplex_etf: rho must be positive");

  Eigen::MatrixXd frame = Eigen::MatrixXd::Zero(d, K);
  if (d >= K) {
    frame.topRows(K) = Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / K);
  } else {
    // Helmert basis: column j of the K x (K-1) basis, written here as row j of frame.
    for (int j = 1; j < K; ++j) {
      const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
      for (int r = 0; r < j; ++r) frame(j - 1, r) = 1.0 / norm;
      frame(j - 1, j) = -static_cast<double>(j) / norm;
    }
  }
  frame *= std::sqrt(rho / frame.squaredNorm());
  if (rotation_seed != 0) frame = random_orthogonal(d, rotation_seed) * frame;
  return EtfFrame{frame, rho, rotation_seed};
}

double etf_gram_error(const Eigen::MatrixXd& W) {
  const Eigen::Index K = W.rows();
  const double s = W.squaredNorm();
  if (K < 2 || !(s > 0.0)) return kInf;
  const Eigen::MatrixXd target = (static_cast<double>(K) / (K - 1)) *
                                 (Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / K));
  const Eigen::MatrixXd gram = (W * W.transpose()) * (static_cast<double>(K) / s);
  return (gram - target).norm() / target.norm();
}

double c2m(int K, int m, double c1) {
  if (m < 1 || m >= K) throw std::invalid_argument("c2m: need 0 < m < K");
  if (!(c1 > 0.0)) throw std::invalid_argument("c2m: c1 must be positive");
  const double md = m;
  return (c1 * md / (c1 + 1.0)) * std::log(md) + (md * c1 / (1.0 + c1)) * std::log((c1 + 1.0) / c1) +
         (md / (c1 + 1.0)) * std::log((K - m) * (c1 + 1.0));
}

double gamma1m(int K, int m, double c1) {
  if (m < 1 || m >= K) throw std::invalid_argument("gamma1m: need 0 < m < K");
  return (1.0 / (1.0 + c1)) * (static_cast<double>(m) / (K - m));
}

double kappam(int K, int m) {
  if (m < 1 || m >= K) throw std::invalid_argument("kappam: need 0 < m < K");
  const double lead = static_cast<double>(K) / (m * static_cast<double>(binomial(K, m)));
  return lead * lead * static_cast<double>(binomial(K - 2, m - 1));
}

SystemShape SystemShape::from_config(const LabelConfig& config) {
  config.validate();
  SystemShape s;
  s.K = config.K;
  for (int m = 1; m <= config.M; ++m) {
    if (!config.present(m)) continue;
    const auto n = config.n(m);
    if (!n) throw std::invalid_argument("multiplicity " + std::to_string(m) + " is not balanced");
    s.ms.push_back(m);
    s.ns.push_back(*n);
  }
  if (s.ms.empty()) throw std::invalid_argument("config has no samples");
  s.N = config.total();
  return s;
}

C1System::C1System(SystemShape shape, double lambda_W, double lambda_H, double rho)
    : shape_(std::move(shape)), ratio_(std::sqrt(lambda_H / lambda_W)), rho_(rho) {
  if (!(lambda_W > 0.0) || !(lambda_H > 0.0)) throw std::invalid_argument("C1System: lambdas must be positive");
  if (!(rho > 0.0)) throw std::invalid_argument("C1System: rho must be positive");
  const int K = shape_.K;
  q_.resize(size());
  r_.resize(size());
  for (Eigen::Index j = 0; j < size(); ++j) {
    const int m = shape_.ms[j];
    const double n = static_cast<double>(shape_.ns[j]);
    const double cb = static_cast<double>(binomial(K, m));
    const double kappa = kappam(K, m);
    const double a = static_cast<double>(K - 1) * m * (K - m) / K;
    q_(j) = kappa * n * cb * cb;
    r_(j) = std::sqrt(cb * n * a) / (rho * cb * std::sqrt(kappa * n)) * ratio_;
  }
}

double C1System::S(const Eigen::VectorXd& c) const {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < size(); ++j) {
    const double g = gamma1m(shape_.K, shape_.ms[j], c(j));
    acc += q_(j) * g * g;
  }
  return std::sqrt(acc);
}

Eigen::VectorXd C1System::residual(const Eigen::VectorXd& c) const {
  const double s = S(c);
  Eigen::VectorXd F(size());
  for (Eigen::Index j = 0; j < size(); ++j) {
    const int m = shape_.ms[j];
    F(j) = gamma1m(shape_.K, m, c(j)) - r_(j) * gap_of(shape_.K, m, c(j)) * s;
  }
  return F;
}

Eigen::MatrixXd C1System::jacobian(const Eigen::VectorXd& c) const {
  const int K = shape_.K;
  const double s = S(c);
  Eigen::VectorXd g(size());
  Eigen::VectorXd dg(size());
  for (Eigen::Index j = 0; j < size(); ++j) {
    const int m = shape_.ms[j];
    g(j) = gamma1m(K, m, c(j));
    dg(j) = -(static_cast<double>(m) / (K - m)) / ((1.0 + c(j)) * (1.0 + c(j)));
  }
  Eigen::MatrixXd J(size(), size());
  for (Eigen::Index j = 0; j < size(); ++j) {
    const double gap = gap_of(K, shape_.ms[j], c(j));
    for (Eigen::Index l = 0; l < size(); ++l) {
      J(j, l) = -r_(j) * gap * q_(l) * g(l) * dg(l) / s;
      if (j == l) J(j, l) += dg(j) - r_(j) * s / c(j);
    }
  }
  return J;
}

double C1System::relative_residual(const Eigen::VectorXd& c) const {
  for (Eigen::Index j = 0; j < size(); ++j)
    if (!(c(j) > 0.0) || !std::isfinite(c(j))) return kInf;
  const Eigen::VectorXd F = residual(c);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < size(); ++j)
    worst = std::max(worst, ratio_or_inf(std::abs(F(j)), gamma1m(shape_.K, shape_.ms[j], c(j))));
  return worst;
}

Eigen::VectorXd C1System::scaled_residual(const Eigen::VectorXd& gaps) const {
  const int K = shape_.K;
  Eigen::VectorXd g(size());
  for (Eigen::Index j = 0; j < size(); ++j) g(j) = gamma_of_gap(K, shape_.ms[j], gaps(j));
  const double s = std::sqrt((q_.array() * g.array().square()).sum());
  Eigen::VectorXd G(size());
  for (Eigen::Index j = 0; j < size(); ++j) G(j) = 1.0 - r_(j) * gaps(j) * s / g(j);
  return G;
}

Eigen::MatrixXd C1System::scaled_jacobian(const Eigen::VectorXd& gaps) const {
  const int K = shape_.K;
  Eigen::VectorXd g(size());
  Eigen::VectorXd dg(size());
  for (Eigen::Index j = 0; j < size(); ++j) {
    g(j) = gamma_of_gap(K, shape_.ms[j], gaps(j));
    dg(j) = -g(j) * g(j) * std::exp(gaps(j));
  }
  const double s = std::sqrt((q_.array() * g.array().square()).sum());
  Eigen::MatrixXd J(size(), size());
  for (Eigen::Index j = 0; j < size(); ++j) {
    for (Eigen::Index l = 0; l < size(); ++l) {
      J(j, l) = -r_(j) * gaps(j) * (q_(l) * g(l) * dg(l) / s) / g(j);
      if (j == l) J(j, l) -= r_(j) * s * (1.0 / g(j) - gaps(j) * dg(j) / (g(j) * g(j)));
    }
  }
  return J;
}

namespace {

struct NewtonRun {
  Eigen::VectorXd gaps;
  double residual = kInf;
  int iterations = 0;
};

// Newton on F_m / gamma1_m in the log of the logit gaps. The unscaled residual
// shrinks like 1/c, so an absolute target would accept runs drifting off to
// c = infinity; working with the gaps keeps small rho well conditioned.
NewtonRun newton(const C1System& sys, Eigen::VectorXd u) {
  NewtonRun run;
  auto norm_at = [&](const Eigen::VectorXd& uu) {
    const Eigen::VectorXd G = sys.scaled_residual(uu.array().exp().matrix());
    return G.allFinite() ? G.lpNorm<Eigen::Infinity>() : kInf;
  };
  double fn = norm_at(u);
  for (int it = 0; it < 100 && fn > 1e-15; ++it) {
    run.iterations = it + 1;
    const Eigen::VectorXd gaps = u.array().exp().matrix();
    const Eigen::MatrixXd Ju = sys.scaled_jacobian(gaps) * gaps.asDiagonal();
    const Eigen::VectorXd step = Ju.partialPivLu().solve(-sys.scaled_residual(gaps));
    if (!step.allFinite()) break;
    double damp = 1.0;
    double trial = norm_at(u + step);
    while (!(trial < fn) && damp > 1e-12) {
      damp *= 0.5;
      trial = norm_at(u + damp * step);
    }
    if (!(trial < fn)) break;
    u += damp * step;
    fn = trial;
    if ((damp * step).lpNorm<Eigen::Infinity>() < 1e-16) break;
  }
  run.gaps = u.array().exp().matrix();
  run.residual = fn;
  return run;
}

std::map<int, double> c_map(const SystemShape& shape, const Eigen::VectorXd& gaps) {
  std::map<int, double> out;
  for (std::size_t j = 0; j < shape.ms.size(); ++j)
    out[shape.ms[j]] = c_of_gap(shape.K, shape.ms[j], gaps(static_cast<Eigen::Index>(j)));
  return out;
}

void require_positive_gaps(const Eigen::VectorXd& gaps, double residual) {
  if (!((gaps.array() > 0.0).all()))
    throw SolverError("c-system root is degenerate: nonpositive logit gap", residual);
}

}  // namespace

C1Solution solve_c1_bisection(const LabelConfig& config, const Hyperparams& hp, double rho) {
  const SystemShape shape = SystemShape::from_config(config);
  const C1System sys(shape, hp.lambda_W, hp.lambda_H, rho);
  const int K = shape.K;
  const double ratio = std::sqrt(hp.lambda_H / hp.lambda_W);
  const Eigen::Index J = sys.size();

  // r_m S = e_m t with t = ratio S / rho
  Eigen::VectorXd e(J);
  for (Eigen::Index j = 0; j < J; ++j) e(j) = static_cast<double>(shape.ms[j]) * (K - 1) / K;

  auto gaps_for = [&](double t) {
    Eigen::VectorXd gaps(J);
    for (Eigen::Index j = 0; j < J; ++j) {
      const int m = shape.ms[j];
      auto g = [&](double gap) { return gamma_of_gap(K, m, gap) - e(j) * gap * t; };
      double lo = 0.0;
      double hi = 1.0;
      while (g(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) throw SolverError("c-system bisection: inner bracket not found", kInf);
      }
      for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
      }
      gaps(j) = 0.5 * (lo + hi);
    }
    return gaps;
  };
  auto S_for = [&](const Eigen::VectorXd& gaps) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      const double cb = static_cast<double>(binomial(K, shape.ms[j]));
      const double g = gamma_of_gap(K, shape.ms[j], gaps(j));
      acc += kappam(K, shape.ms[j]) * static_cast<double>(shape.ns[j]) * cb * cb * g * g;
    }
    return std::sqrt(acc);
  };
  auto phi = [&](double log_t) {
    const double t = std::exp(log_t);
    return t - ratio * S_for(gaps_for(t)) / rho;
  };

  double lo = 0.0;
  double hi = 0.0;
  int guard = 0;
  while (phi(lo) >= 0.0) {
    lo -= 1.0;
    if (++guard > 200) throw SolverError("c-system bisection: outer bracket not found", kInf);
  }
  while (phi(hi) <= 0.0) {
    hi += 1.0;
    if (++guard > 400) throw SolverError("c-system bisection: outer bracket not found", kInf);
  }
  if (hi < lo) std::swap(lo, hi);
  int iterations = 0;
  for (; iterations < 200 && hi - lo > 1e-15; ++iterations) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) < 0.0 ? lo : hi) = mid;
  }
  const Eigen::VectorXd gaps = gaps_for(std::exp(0.5 * (lo + hi)));
  C1Solution out;
  out.c1 = c_map(shape, gaps);
  out.residual = sys.scaled_residual(gaps).lpNorm<Eigen::Infinity>();
  out.iterations = iterations;
  out.method = "bisection";
  out.roots = {out.c1};
  require_positive_gaps(gaps, out.residual);
  return out;
}

C1Solution solve_c1_system(const LabelConfig& config, const Hyperparams& hp, double rho) {
  hp.validate();
  const SystemShape shape = SystemShape::from_config(config);
  const C1System sys(shape, hp.lambda_W, hp.lambda_H, rho);
  const Eigen::Index J = sys.size();

  constexpr std::array<double, 4> kStartGaps{1.0, 0.25, 4.0, 16.0};
  std::vector<NewtonRun> converged;
  for (double gap0 : kStartGaps) {
    NewtonRun run = newton(sys, Eigen::VectorXd::Constant(J, std::log(gap0)));
    if (!(run.residual <= kNewtonTarget)) continue;
    const bool seen = std::any_of(converged.begin(), converged.end(), [&](const NewtonRun& r) {
      return ((r.gaps - run.gaps).array().abs() <= 1e-8 * r.gaps.array().abs()).all();
    });
    if (!seen) converged.push_back(std::move(run));
  }

  if (converged.empty()) {
    C1Solution fallback = solve_c1_bisection(config, hp, rho);
    if (!(fallback.residual <= kNewtonTarget))
      throw SolverError("c-system did not converge", fallback.residual);
    return fallback;
  }

  const NewtonRun& best = converged.front();
  require_positive_gaps(best.gaps, best.residual);
  C1Solution out;
  out.c1 = c_map(shape, best.gaps);
  out.residual = best.residual;
  out.iterations = best.iterations;
  out.method = "newton";
  for (const NewtonRun& r : converged) out.roots.push_back(c_map(shape, r.gaps));
  return out;
}

const MultiplicitySolution& AnalyticSolution::at(int m) const {
  for (const auto& rec : per_m)
    if (rec.m == m) return rec;
  throw std::out_of_range("AnalyticSolution: no record for multiplicity " + std::to_string(m));
}

std::map<int, double> AnalyticSolution::c1() const {
  std::map<int, double> out;
  for (const auto& rec : per_m) out[rec.m] = rec.c1;
  return out;
}

namespace {

// Derived constants for one multiplicity at (rho, c1).
MultiplicitySolution fill_record(int K, int m, std::int64_t n, double rho, double c1) {
  MultiplicitySolution r;
  r.m = m;
  r.n = n;
  r.c1 = c1;
  r.c2 = c2m(K, m, c1);
  r.gamma1 = gamma1m(K, m, c1);
  r.kappa = kappam(K, m);
  const double gap = gap_of(K, m, c1);
  r.z_in = static_cast<double>(K - m) * gap / K;
  r.z_out = -static_cast<double>(m) * gap / K;
  const double denom = m * std::exp(r.z_in) + (K - m) * std::exp(r.z_out);
  r.alpha = std::exp(r.z_in) / denom;
  r.beta = std::exp(r.z_out) / denom;
  r.Cm = (K - 1) * gap / rho;
  const double Nm = static_cast<double>(binomial(K, m)) * n;
  const double a = static_cast<double>(K - 1) * m * (K - m) / K;
  r.Hm_norm = std::sqrt(Nm * a / rho) * gap;
  r.c3 = std::sqrt(r.kappa / n) * r.Hm_norm / std::sqrt(rho);
  return r;
}

double bound_from(const SystemShape& shape, const std::vector<MultiplicitySolution>& recs, const Hyperparams& hp,
                  double rho, double* S_out, double* gamma2_out) {
  double s2 = 0.0;
  double gamma2 = 0.0;
  const double N = static_cast<double>(shape.N);
  for (std::size_t j = 0; j < shape.ms.size(); ++j) {
    const int m = shape.ms[j];
    const MultiplicitySolution& r = recs[j];
    if (r.m != m || r.n != shape.ns[j]) throw std::invalid_argument("solution does not match the label config");
    const double cb = static_cast<double>(binomial(shape.K, m));
    s2 += r.gamma1 * r.gamma1 * r.kappa * static_cast<double>(r.n) * cb * cb;
    gamma2 += (cb * static_cast<double>(r.n) / N) * r.c2;
  }
  const double S = std::sqrt(s2);
  if (S_out) *S_out = S;
  if (gamma2_out) *gamma2_out = gamma2;
  return -(1.0 / N) * S * std::sqrt(hp.lambda_W / hp.lambda_H) * rho + gamma2 + 2.0 * hp.lambda_W * rho;
}

}  // namespace

AnalyticSolution analytic_solution_at(const LabelConfig& config, const Hyperparams& hp, double rho) {
  const SystemShape shape = SystemShape::from_config(config);
  const C1Solution sol = solve_c1_system(config, hp, rho);
  AnalyticSolution out;
  out.K = shape.K;
  out.rho = rho;
  for (std::size_t j = 0; j < shape.ms.size(); ++j)
    out.per_m.push_back(fill_record(shape.K, shape.ms[j], shape.ns[j], rho, sol.c1.at(shape.ms[j])));
  double S = 0.0;
  out.bound = bound_from(shape, out.per_m, hp, rho, &S, &out.Gamma2);
  out.Q = std::sqrt(hp.lambda_H / hp.lambda_W) * S;
  out.b_star = 0.0;
  out.c_residual = sol.residual;
  out.method = sol.method;
  out.roots = sol.roots;
  return out;
}

double lower_bound(const AnalyticSolution& solution, const Hyperparams& hp, const LabelConfig& config, double rho) {
  hp.validate();
  const SystemShape shape = SystemShape::from_config(config);
  if (solution.K != shape.K || solution.per_m.size() != shape.ms.size())
    throw std::invalid_argument("lower_bound: solution does not match the label config");
  return bound_from(shape, solution.per_m, hp, rho, nullptr, nullptr);
}

AnalyticSolution optimal_rho(const LabelConfig& config, const Hyperparams& hp) {
  hp.validate();
  auto bound = [&](double rho) { return analytic_solution_at(config, hp, rho).bound; };

  constexpr double kRhoFloor = 1e-4;
  double hi = 1.0;
  double b_hi = bound(hi);
  double b_half = bound(0.5 * hi);
  int doublings = 0;
  while (b_hi <= b_half) {
    if (++doublings > 200) throw SolverError("optimal_rho: bound never turns increasing", b_hi);
    hi *= 2.0;
    b_half = b_hi;
    b_hi = bound(hi);
  }
  double a = doublings > 0 ? 0.25 * hi : kRhoFloor;
  double b = hi;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = bound(x1);
  double f2 = bound(x2);
  for (int it = 0; it < 300 && (b - a) > 1e-13 * (a + b); ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = bound(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = bound(x2);
    }
  }
  const double rho = f1 <= f2 ? x1 : x2;
  if (doublings == 0 && rho <= kRhoFloor * (1.0 + 1e-6))
    throw SolverError("optimal_rho: minimum lies below the search floor", rho);
  return analytic_solution_at(config, hp, rho);
}

ModelState construct_global(const Dataset& data, const Hyperparams& hp, const AnalyticSolution& solution,
                            std::uint64_t rotation_seed) {
  hp.validate();
  const int K = data.K();
  if (solution.K != K) throw std::invalid_argument("construct_global: solution was built for another K");
  if (hp.d < K - 1) throw std::invalid_argument("construct_global: d must be at least K-1");
  if (!(solution.rho > 0.0)) throw std::invalid_argument("construct_global: rho must be positive");
  std::map<int, double> Cm;
  for (int m = 1; m <= data.M(); ++m) {
    if (!data.config().present(m)) continue;
    const auto n = data.config().n(m);
    if (!n) throw std::invalid_argument("construct_global: multiplicity " + std::to_string(m) + " is not balanced");
    const auto it = std::find_if(solution.per_m.begin(), solution.per_m.end(),
                                 [m](const MultiplicitySolution& r) { return r.m == m; });
    if (it == solution.per_m.end() || it->n != *n)
      throw std::invalid_argument("construct_global: solution lacks multiplicity " + std::to_string(m));
    if (!(it->Cm > 0.0)) throw std::invalid_argument("construct_global: C_m must be positive");
    Cm[m] = it->Cm;
  }

  ModelState state = ModelState::zeros(K, hp.d, data.size());
  state.W = simplex_etf(K, hp.d, solution.rho, rotation_seed).W();
  for (std::int64_t col = 0; col < data.size(); ++col) {
    const LabelSet& set = data.label_of(col);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(hp.d);
    for (int l : set.members()) h += state.W.row(l).transpose();
    state.H.col(col) = Cm.at(set.multiplicity()) * h;
  }
  state.b.setConstant(solution.b_star);
  return state;
}

double global_objective(const Dataset& data, const Hyperparams& hp) {
  const AnalyticSolution sol = optimal_rho(data.config(), hp);
  return objective(construct_global(data, hp, sol), data, hp);
}

VerifyTolerances VerifyTolerances::uniform(double tol) {
  VerifyTolerances t;
  t.w_norm_spread = t.bias = t.etf_gram = t.self_duality = t.tagwise = t.column_mean = t.duality_sum =
      t.logit_spread = t.logit_centering = t.c1_consistency = t.projection = tol;
  return t;
}

bool VerificationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerificationCheck& c) { return c.passed; });
}

const VerificationCheck* VerificationReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

Eigen::MatrixXd label_projection(int K, int m) {
  const LabelMatrix Y = label_matrix(K, m);
  const GramConstants g = pinv_label_matrix(K, m);
  const double tau = boost::rational_cast<double>(g.tau);
  const double eta = boost::rational_cast<double>(g.eta);
  const Eigen::MatrixXd Yd = Y.Y.cast<double>();
  const Eigen::MatrixXd pinv = tau * Yd + eta * Eigen::MatrixXd::Ones(Yd.rows(), Yd.cols());
  return Yd.transpose() * pinv;
}

double pascal_norm_check(const Eigen::MatrixXd& Hm, int K, int m) {
  if (m < 1 || m >= K) throw std::invalid_argument("pascal_norm_check: need 0 < m < K");
  const std::int64_t cb = binomial(K, m);
  if (Hm.cols() == 0 || Hm.cols() % cb != 0)
    throw std::invalid_argument("pascal_norm_check: column count must be a positive multiple of C(K,m)");
  const std::int64_t n = Hm.cols() / cb;
  const double h2 = Hm.squaredNorm();
  if (h2 == 0.0) return 0.0;
  const LabelMatrix Y = label_matrix(K, m);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < K; ++j) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(Hm.rows());
      for (std::int64_t k = 0; k < cb; ++k)
        if (Y.Y(j, k) != 0) v += Hm.col(k * n + i);
      total += v.squaredNorm();
    }
  }
  return std::abs(total - static_cast<double>(binomial(K - 2, m - 1)) * h2) / h2;
}

VerificationReport verify_global(const ModelState& state, const Dataset& data, const Hyperparams& hp,
                                 const VerifyTolerances& tol) {
  check_shapes(state, data, hp);
  const int K = data.K();
  const LabelConfig& config = data.config();
  const Eigen::MatrixXd& W = state.W;
  VerificationReport rep;
  rep.rho = W.squaredNorm();
  auto add = [&](std::string name, double residual, double limit) {
    if (std::isnan(residual)) residual = kInf;
    rep.checks.push_back({std::move(name), residual, limit, residual <= limit});
  };

  const Eigen::VectorXd row_norms = W.rowwise().norm();
  const double top = row_norms.maxCoeff();
  add("w_norm_spread", ratio_or_inf(top - row_norms.minCoeff(), top), tol.w_norm_spread);

  const double b_scale = std::max(1.0, row_norms.mean());
  const double b_mean = state.b.mean();
  const double b_res = hp.lambda_b > 0.0 ? state.b.norm() : (state.b.array() - b_mean).matrix().norm();
  add("bias", b_res / b_scale, tol.bias);

  add("etf_gram", etf_gram_error(W), tol.etf_gram);

  const Eigen::MatrixXd Z = logits(state);
  std::map<int, std::int64_t> balanced_n;
  bool all_balanced = true;

  for (int m = 1; m <= data.M(); ++m) {
    if (!config.present(m)) continue;
    const std::int64_t begin = data.block_begin(m);
    const std::int64_t width = data.block_size(m);

    // tag-wise constant by least squares over the whole multiplicity block
    Eigen::MatrixXd S(hp.d, width);
    for (std::int64_t j = 0; j < width; ++j) {
      S.col(j).setZero();
      for (int l : data.label_of(begin + j).members()) S.col(j) += W.row(l).transpose();
    }
    const auto Hm = state.H.middleCols(begin, width);
    const double ss = S.squaredNorm();
    const double C_hat = ss > 0.0 ? (Hm.array() * S.array()).sum() / ss : kInf;
    rep.fitted_C[m] = C_hat;
    double tag_res = 0.0;
    if (!(C_hat > 0.0) || !std::isfinite(C_hat)) {
      tag_res = kInf;
    } else {
      for (std::int64_t j = 0; j < width; ++j)
        tag_res = std::max(tag_res, ratio_or_inf((Hm.col(j) - C_hat * S.col(j)).norm(), Hm.col(j).norm()));
    }
    if (m == 1) {
      add("self_duality", tag_res, tol.self_duality);
    } else {
      add(tagged("tagwise", m), tag_res, tol.tagwise);
    }

    // logits: two values per sample, centered about the bias
    double in_spread = 0.0;
    double out_spread = 0.0;
    double in_sum = 0.0;
    double out_sum = 0.0;
    for (std::int64_t j = 0; j < width; ++j) {
      const LabelSet& set = data.label_of(begin + j);
      double in_lo = kInf, in_hi = -kInf, out_lo = kInf, out_hi = -kInf, in_acc = 0.0, out_acc = 0.0;
      for (int k = 0; k < K; ++k) {
        const double z = Z(k, begin + j);
        if (set.contains(k)) {
          in_lo = std::min(in_lo, z);
          in_hi = std::max(in_hi, z);
          in_acc += z;
        } else {
          out_lo = std::min(out_lo, z);
          out_hi = std::max(out_hi, z);
          out_acc += z;
        }
      }
      const double in_mean = in_acc / m;
      const double out_mean = out_acc / (K - m);
      const double gap = std::abs(in_mean - out_mean);
      in_spread = std::max(in_spread, ratio_or_inf(in_hi - in_lo, gap));
      out_spread = std::max(out_spread, ratio_or_inf(out_hi - out_lo, gap));
      in_sum += in_mean;
      out_sum += out_mean;
    }
    const double z_in = in_sum / width;
    const double z_out = out_sum / width;
    rep.z_in[m] = z_in - b_mean;
    rep.z_out[m] = z_out - b_mean;
    rep.fitted_c1[m] = static_cast<double>(m) / (K - m) * std::exp(z_in - z_out);
    add(tagged("logit_in_spread", m), in_spread, tol.logit_spread);
    add(tagged("logit_out_spread", m), out_spread, tol.logit_spread);
    add(tagged("logit_centering", m),
        ratio_or_inf(std::abs(m * z_in + (K - m) * z_out - K * b_mean), K * std::abs(z_in - z_out)),
        tol.logit_centering);

    const auto n_opt = config.n(m);
    if (!n_opt) {
      all_balanced = false;
      continue;
    }
    const std::int64_t n = *n_opt;
    balanced_n[m] = n;
    const std::int64_t cb = binomial(K, m);
    const LabelMatrix Y = label_matrix(K, m);

    double col_mean = 0.0;
    double dual = 0.0;
    double block_top = 0.0;
    for (std::int64_t j = 0; j < width; ++j) block_top = std::max(block_top, Hm.col(j).norm());
    const double zeta =
        std::sqrt(static_cast<double>(binomial(K - 2, m - 1)) / n) * ratio_or_inf(Hm.norm(), W.norm());
    for (std::int64_t i = 0; i < n; ++i) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(hp.d);
      for (std::int64_t k = 0; k < cb; ++k) mean += Hm.col(k * n + i);
      mean /= static_cast<double>(cb);
      col_mean = std::max(col_mean, ratio_or_inf(mean.norm(), block_top));
      for (int cls = 0; cls < K; ++cls) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(hp.d);
        for (std::int64_t k = 0; k < cb; ++k)
          if (Y.Y(cls, k) != 0) v += Hm.col(k * n + i);
        dual = std::max(dual, ratio_or_inf((zeta * W.row(cls).transpose() - v).norm(), v.norm()));
      }
    }
    add(tagged("column_mean", m), col_mean, tol.column_mean);
    add(tagged("duality_sum", m), dual, tol.duality_sum);

    const Eigen::MatrixXd P = label_projection(K, m);
    double proj = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      Eigen::MatrixXd Hi(hp.d, cb);
      for (std::int64_t k = 0; k < cb; ++k) Hi.col(k) = Hm.col(k * n + i);
      proj += (Hi - Hi * P).squaredNorm();
    }
    add(tagged("projection", m), ratio_or_inf(std::sqrt(proj), Hm.norm()), tol.projection);
  }

  if (all_balanced) {
    double res = kInf;
    try {
      const C1System sys(SystemShape::from_config(config), hp.lambda_W, hp.lambda_H, rep.rho);
      Eigen::VectorXd c(sys.size());
      for (Eigen::Index j = 0; j < sys.size(); ++j) c(j) = rep.fitted_c1.at(sys.shape().ms[j]);
      res = sys.relative_residual(c);
    } catch (const std::invalid_argument&) {
      res = kInf;
    }
    add("c1_consistency", res, tol.c1_consistency);
  }
  return rep;
}

}  // namespace mlnc
