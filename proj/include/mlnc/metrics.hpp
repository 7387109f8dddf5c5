#pragma once

// Collapse measurements over a model state.
//
//   NC1_m = (1/K_m) tr(Sigma_W Sigma_B^+) over the multiplicity-m samples
//   NC2   = | W W^T / |W W^T|_F - P / |P|_F |_F,   P = I - 11^T / K
//   NC3   = | W / |W|_F - Hbar_1^T / |Hbar_1|_F |_F
//   NC_m  = mean angle(hbar_S, sum_{l in S} hbar_{l}) over present size-m sets S
//           / mean angle(hbar_S, any sum of m distinct singleton means)
//
// Angles are arccos of the clamped cosine, in radians.

#include <cstdint>
#include <map>
#include <optional>
#include <utility>

#include <Eigen/Core>

#include "mlnc/labelspace.hpp"
#include "mlnc/ufm.hpp"

namespace mlnc {

/// (m, k): multiplicity and lexicographic subset rank.
using ClassKey = std::pair<int, std::int64_t>;
using ClassMeans = std::map<ClassKey, Eigen::VectorXd>;

/// Means of every present class; subsets with zero samples are absent.
ClassMeans class_means(const Eigen::MatrixXd& H, const Dataset& data);

/// NC1 per multiplicity with at least two present classes. A degenerate
/// between-class covariance yields +infinity.
std::map<int, double> nc1(const Eigen::MatrixXd& H, const Dataset& data);

/// Throws std::invalid_argument for W = 0.
double nc2(const Eigen::MatrixXd& W);

/// Throws std::invalid_argument if any multiplicity-1 class is missing.
double nc3(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H, const Dataset& data);

struct NcmResult {
  double value = 0.0;
  double numerator = 0.0;    // mean matched angle
  double denominator = 0.0;  // mean angle over all pairs
  std::int64_t matched_count = 0;
  std::int64_t all_count = 0;
  std::int64_t skipped = 0;  // pairs dropped because a vector had zero length
};

/// Tag-wise angle ratio for multiplicity m >= 2 (m = 2 is the standard metric).
/// Throws std::invalid_argument when no size-m subset has all of its
/// singleton components present.
NcmResult ncm(const Eigen::MatrixXd& H, const Dataset& data, int m = 2);

struct MetricReport {
  std::map<int, double> nc1;
  std::optional<double> nc2;
  std::optional<double> nc3;
  std::optional<double> ncm;               // multiplicity 2
  std::map<int, double> ncm_by_multiplicity;  // every m >= 2 where defined
  double w_norm_spread = 0.0;  // (max - min) / max of classifier row norms
  double bias_residual = 0.0;  // |b - mean(b) 1|
};

/// Every metric that is defined for the state; undefined ones stay empty.
MetricReport compute_metrics(const ModelState& state, const Dataset& data);

/// Geometric angle between two vectors, or nullopt if either has zero length.
std::optional<double> angle_between(const Eigen::Ref<const Eigen::VectorXd>& u,
                                    const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace mlnc
