#pragma once

// Curvature probes of the objective from Hessian-vector products only.

#include <cstdint>
#include <optional>
#include <string_view>

#include "mlnc/labelspace.hpp"
#include "mlnc/optimizer.hpp"
#include "mlnc/theory.hpp"
#include "mlnc/ufm.hpp"

namespace mlnc {

struct EigenEstimate {
  double lambda = 0.0;          // Rayleigh quotient of direction
  ModelState direction;         // unit norm
  double residual = 0.0;        // |H v - lambda v|
  bool converged = false;
  int iterations = 0;
  double lambda_max = 0.0;      // dominant eigenvalue from the preliminary run
  double shift = 0.0;
};

/// Power iteration for the dominant eigenvalue, then power iteration on
/// (shift I - Hessian) with shift just above it. Directions in `deflate` (unit,
/// mutually orthogonal) are projected out of every iterate. Converged when the
/// Rayleigh residual is <= tol * (1 + |lambda_max|).
EigenEstimate min_eigenvalue(const ModelState& state, const Dataset& data, const Hyperparams& hp, int iters = 50000,
                             double tol = 1e-7, std::uint64_t seed = 1,
                             const std::vector<ModelState>& deflate = {});

struct HvpCheck {
  double symmetry = 0.0;     // |<u, Hv> - <v, Hu>| / (|u||Hv| + |v||Hu|)
  double finite_diff = 0.0;  // relative error of Hv against a central gradient difference
  bool passed = false;
};

HvpCheck hvp_self_check(const ModelState& state, const Dataset& data, const Hyperparams& hp, std::uint64_t seed = 7);

enum class CurvatureClass { approx_global_minimum, strict_saddle, inconclusive };

std::string_view to_string(CurvatureClass c);

struct ProbeConfig {
  double grad_tol = 1e-8;
  double f_tol = 1e-6;   // relative gap to the analytic optimum
  int iters = 50000;
  double eig_tol = 1e-7;
  std::uint64_t seed = 1;
  int max_zero_directions = 16;
};

struct CurvatureReport {
  double f = 0.0;
  double grad_norm = 0.0;
  double lambda_min_estimate = 0.0;
  double lambda_max_estimate = 0.0;
  double eigvec_residual = 0.0;
  bool eigen_converged = false;
  bool is_critical = false;
  double curvature_margin = 0.0;
  std::optional<double> f_global;
  int near_zero_directions = 0;
  HvpCheck hvp;
  CurvatureClass classification = CurvatureClass::inconclusive;
  ModelState direction;
};

/// Requires d > K (std::invalid_argument otherwise). f_global defaults to the
/// analytic optimum when the data is balanced within each multiplicity.
CurvatureReport probe(const ModelState& state, const Dataset& data, const Hyperparams& hp,
                      const ProbeConfig& cfg = {}, std::optional<double> f_global = std::nullopt);

struct EscapeReport {
  double f_saddle = 0.0;
  double perturbation = 0.0;
  double f_plus = 0.0;   // f(state + eps v)
  double f_minus = 0.0;  // f(state - eps v)
  bool both_decrease = false;
  bool diverged = false;
  double f_final = 0.0;
  bool descended = false;
  Trajectory trajectory;
  VerificationReport verification;
};

/// Perturbs along the probe's negative-curvature direction by 1e-3 |state|
/// (1e-3 at the origin), trains, and verifies the endpoint. Throws
/// std::invalid_argument unless the probe found a strict saddle.
EscapeReport escape_test(const ModelState& saddle, const Dataset& data, const Hyperparams& hp,
                         const CurvatureReport& saddle_probe, const TrainConfig& cfg, const VerifyTolerances& tol);

}  // namespace mlnc
