#pragma once

// Analytic global minimizers of the PAL-CE UFM objective on data that is
// balanced within each multiplicity.
//
// At a minimizer W is a scaled simplex ETF with |W|_F^2 = rho and every
// multiplicity-m feature is C_m times the sum of its tags' classifier rows.
// The logits of a multiplicity-m sample then take two values, z_in on its tags
// and z_out elsewhere, with gap Delta_m = z_in - z_out = log((K-m)/m * c1_m).
// The constants c1_m solve a small coupled system at each rho; rho itself
// minimizes the tight lower bound
//
//   bound(rho) = -(1/N) Q rho sqrt(lW/lH) + Gamma2 + 2 lW rho.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mlnc/labelspace.hpp"
#include "mlnc/ufm.hpp"

namespace mlnc {

struct EtfFrame {
  Eigen::MatrixXd matrix;  // d x K, column k is the class-k classifier direction
  double scale = 0.0;      // |matrix|_F^2
  std::uint64_t rotation_seed = 0;

  /// K x d classifier, the layout ModelState uses.
  Eigen::MatrixXd W() const { return matrix.transpose(); }
};

/// Seed 0 is the canonical frame: rows of I - 11^T/K padded with zeros when
/// d >= K, a Helmert basis of 1-perp when d = K-1. Any other seed applies a
/// Haar rotation drawn from that seed. Throws std::invalid_argument for
/// d < K-1, K < 2 or rho <= 0.
EtfFrame simplex_etf(int K, int d, double rho, std::uint64_t rotation_seed = 0);

/// |W W^T K / |W|^2 - K/(K-1) (I - 11^T/K)|_F, relative to the target's norm.
double etf_gram_error(const Eigen::MatrixXd& W);

double c2m(int K, int m, double c1);
double gamma1m(int K, int m, double c1);
double kappam(int K, int m);

/// Present multiplicities of a within-multiplicity balanced config.
struct SystemShape {
  int K = 0;
  std::vector<int> ms;
  std::vector<std::int64_t> ns;  // n_m per present m
  std::int64_t N = 0;

  static SystemShape from_config(const LabelConfig& config);
};

/// The coupled equations F_m(c) = 0 at fixed rho, one per present multiplicity:
///
///   gamma1_m(c_m) = r_m Delta_m(c_m) S(c),
///   S(c)^2 = sum_m gamma1_m^2 kappa_m n_m C(K,m)^2,
///   r_m = sqrt(N_m a_m) / (rho C(K,m) sqrt(kappa_m n_m)) * sqrt(lH/lW),
///
/// where a_m = (K-1) m (K-m) / K, so that r_m Delta_m is |H_m|_F / |W|_F at the
/// structured point divided by rho.
class C1System {
 public:
  C1System(SystemShape shape, double lambda_W, double lambda_H, double rho);

  Eigen::VectorXd residual(const Eigen::VectorXd& c) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& c) const;
  /// max_m |F_m(c)| / gamma1_m(c_m).
  double relative_residual(const Eigen::VectorXd& c) const;
  /// F_m / gamma1_m and its Jacobian as functions of the logit gaps
  /// Delta_m = log((K-m) c_m / m), which stay accurate as rho -> 0.
  Eigen::VectorXd scaled_residual(const Eigen::VectorXd& gaps) const;
  Eigen::MatrixXd scaled_jacobian(const Eigen::VectorXd& gaps) const;
  double S(const Eigen::VectorXd& c) const;

  const SystemShape& shape() const { return shape_; }
  double rho() const { return rho_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(shape_.ms.size()); }

 private:
  SystemShape shape_;
  double ratio_;  // sqrt(lH / lW)
  double rho_;
  Eigen::VectorXd q_;  // kappa_m n_m C(K,m)^2
  Eigen::VectorXd r_;
};

struct C1Solution {
  std::map<int, double> c1;
  double residual = 0.0;  // max_m |F_m| / gamma1_m
  int iterations = 0;
  std::string method;     // "newton" or "bisection"
  /// Every distinct root reached from the Newton starts.
  std::vector<std::map<int, double>> roots;
};

/// Damped Newton in the log gaps from several starts, falling back to nested
/// bisection. Throws SolverError when no start reaches the residual target
/// and the fallback fails too, or when a root has a nonpositive gap.
C1Solution solve_c1_system(const LabelConfig& config, const Hyperparams& hp, double rho);

/// Fallback solver used on its own by tests: outer bisection on
/// t = sqrt(lH/lW) S / rho, inner bisection on each Delta_m.
C1Solution solve_c1_bisection(const LabelConfig& config, const Hyperparams& hp, double rho);

struct MultiplicitySolution {
  int m = 0;
  std::int64_t n = 0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double gamma1 = 0.0;
  double kappa = 0.0;
  double Cm = 0.0;
  double z_in = 0.0;
  double z_out = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double Hm_norm = 0.0;
};

struct AnalyticSolution {
  int K = 0;
  double rho = 0.0;
  std::vector<MultiplicitySolution> per_m;
  double Q = 0.0;  // sqrt(lH/lW) S
  double Gamma2 = 0.0;
  double b_star = 0.0;
  double bound = 0.0;
  double c_residual = 0.0;
  std::string method;
  std::vector<std::map<int, double>> roots;

  const MultiplicitySolution& at(int m) const;
  std::map<int, double> c1() const;
};

/// Solves the c-system at rho and fills every derived constant.
AnalyticSolution analytic_solution_at(const LabelConfig& config, const Hyperparams& hp, double rho);

/// The bound evaluated with the solution's c1 values held fixed at the given rho.
double lower_bound(const AnalyticSolution& solution, const Hyperparams& hp, const LabelConfig& config, double rho);

/// Golden-section search of the bound over rho, re-solving the c-system at
/// every evaluation. Throws SolverError on bracket failure.
AnalyticSolution optimal_rho(const LabelConfig& config, const Hyperparams& hp);

/// W = simplex_etf(rho), h_{m,k,i} = C_m sum_{l in S} w^l, b = 0.
/// Throws std::invalid_argument when the data, hp and solution disagree.
ModelState construct_global(const Dataset& data, const Hyperparams& hp, const AnalyticSolution& solution,
                            std::uint64_t rotation_seed = 0);

/// f at construct_global(optimal_rho(config)).
double global_objective(const Dataset& data, const Hyperparams& hp);

struct VerifyTolerances {
  double w_norm_spread = 1e-3;
  double bias = 1e-3;
  double etf_gram = 1e-3;
  double self_duality = 1e-3;
  double tagwise = 1e-3;
  double column_mean = 1e-3;
  double duality_sum = 1e-3;
  double logit_spread = 1e-3;
  double logit_centering = 1e-3;
  double c1_consistency = 1e-3;
  double projection = 1e-3;

  static VerifyTolerances uniform(double tol);
};

struct VerificationCheck {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;
  double rho = 0.0;
  std::map<int, double> fitted_C;  // least-squares tag-wise constants
  std::map<int, double> z_in;      // mean in-group logit per m, bias removed
  std::map<int, double> z_out;
  std::map<int, double> fitted_c1; // (m/(K-m)) exp(z_in - z_out)

  bool passed() const;
  const VerificationCheck* find(std::string_view name) const;
};

/// Every optimality condition that applies to the data; the per-(m, i)
/// conditions, the c-system consistency and the projection check apply to
/// balanced multiplicities only. Never throws on a well-shaped state.
VerificationReport verify_global(const ModelState& state, const Dataset& data, const Hyperparams& hp,
                                 const VerifyTolerances& tol);

/// | |H_m D_m|_F^2 - C(K-2,m-1) |H_m|_F^2 | / |H_m|_F^2 with the columns of Hm
/// ordered subset-major. Throws std::invalid_argument when the column count is
/// not a multiple of C(K,m).
double pascal_norm_check(const Eigen::MatrixXd& Hm, int K, int m);

/// Y_m^T (Y_m^T)^+ as a C(K,m) x C(K,m) double matrix.
Eigen::MatrixXd label_projection(int K, int m);

}  // namespace mlnc
