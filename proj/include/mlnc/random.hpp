#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace mlnc {

/// Standard normal draws with a fully specified bit stream: std::mt19937_64,
/// then Box-Muller (cosine branch) on two 53-bit uniforms u1 in (0,1], u2 in [0,1).
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * kScale;
    const double u2 = static_cast<double>(engine_() >> 11) * kScale;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform in [0, 1) from the same engine.
  double uniform() {
    constexpr double kScale = 1.0 / 9007199254740992.0;
    return static_cast<double>(engine_() >> 11) * kScale;
  }

  std::uint64_t raw() { return engine_(); }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = next();
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

/// Haar-distributed d x d orthogonal matrix (QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q).
Eigen::MatrixXd random_orthogonal(int d, std::uint64_t seed);

}  // namespace mlnc
