#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "mlnc/labelspace.hpp"
#include "mlnc/ufm.hpp"

namespace testing_support {

inline mlnc::LabelConfig reference_labels() { return mlnc::LabelConfig::balanced(3, {10, 10}); }

inline mlnc::Hyperparams reference_hp(int d = 5) { return {d, 5e-3, 5e-3, 1e-3}; }

inline mlnc::ModelState gaussian_state(int K, int d, std::int64_t N, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  mlnc::ModelState s = mlnc::ModelState::zeros(K, d, N);
  for (Eigen::Index j = 0; j < s.W.size(); ++j) s.W.data()[j] = normal(rng);
  for (Eigen::Index j = 0; j < s.H.size(); ++j) s.H.data()[j] = normal(rng);
  for (Eigen::Index j = 0; j < s.b.size(); ++j) s.b.data()[j] = normal(rng);
  return s;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mlnc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
