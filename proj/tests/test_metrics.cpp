#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "mlnc/metrics.hpp"
#include "mlnc/optimizer.hpp"
#include "mlnc/random.hpp"
#include "mlnc/theory.hpp"
#include "support.hpp"

using namespace mlnc;
using testing_support::gaussian_state;
using testing_support::reference_hp;
using testing_support::reference_labels;

namespace {

// tr(Sigma_W Sigma_B^+)/K_m straight from the definition, with the
// pseudo-inverse taken by a complete orthogonal decomposition.
double nc1_direct(const Eigen::MatrixXd& H, const Dataset& data, int m) {
  const std::int64_t begin = data.block_begin(m);
  const std::int64_t width = data.block_size(m);
  const Eigen::VectorXd mu = H.middleCols(begin, width).rowwise().mean();
  const Eigen::Index d = H.rows();
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  int classes = 0;
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(data.subsets(m).size()); ++k) {
    const std::int64_t n = data.config().count(m, k);
    if (n == 0) continue;
    ++classes;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (std::int64_t i = 0; i < n; ++i) mean += H.col(data.column(m, k, i));
    mean /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const Eigen::VectorXd c = H.col(data.column(m, k, i)) - mean;
      sw += c * c.transpose();
    }
    sb += (mean - mu) * (mean - mu).transpose();
  }
  sw /= static_cast<double>(width);
  sb /= classes;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sb);
  cod.setThreshold(1e-10);
  return (sw * cod.pseudoInverse()).trace() / classes;
}

}  // namespace

TEST_CASE("all collapse metrics vanish at the constructed global minimiser") {
  const LabelConfig cfg = LabelConfig::balanced(4, {3, 2, 2});
  const Hyperparams hp{7, 5e-3, 5e-3, 1e-3};
  const Dataset data = generate_dataset(cfg);
  const ModelState st = construct_global(data, hp, optimal_rho(cfg, hp), 8);
  const MetricReport r = compute_metrics(st, data);
  REQUIRE(r.nc2);
  REQUIRE(r.nc3);
  REQUIRE(r.ncm);
  CHECK(r.nc1.size() == 3);
  for (const auto& [m, v] : r.nc1) CHECK(v < 1e-12);
  CHECK(*r.nc2 < 1e-12);
  CHECK(*r.nc3 < 1e-12);
  CHECK(*r.ncm < 1e-6);
  CHECK(r.ncm_by_multiplicity.size() == 2);
  for (const auto& [m, v] : r.ncm_by_multiplicity) CHECK(v < 1e-6);
  CHECK(r.w_norm_spread < 1e-12);
  CHECK(r.bias_residual < 1e-12);
}

TEST_CASE("NC1 agrees with the definition on random features") {
  const Dataset data = generate_dataset(LabelConfig::per_subset(4, {{3, 2, 4, 2}, {2, 0, 3, 1, 1, 2}}));
  const ModelState st = gaussian_state(4, 9, data.size(), 21);
  const auto v = nc1(st.H, data);
  REQUIRE(v.size() == 2);
  for (int m : {1, 2}) CHECK(std::abs(v.at(m) - nc1_direct(st.H, data, m)) < 1e-9 * (1 + v.at(m)));
}

TEST_CASE("NC2 of orthonormal classifier rows has a closed form") {
  for (int K : {2, 3, 5, 8}) {
    const Eigen::MatrixXd Q = random_orthogonal(K + 3, 17);
    const Eigen::MatrixXd W = Q.topRows(K);
    const double a = 1.0 / std::sqrt(K) - (1.0 - 1.0 / K) / std::sqrt(K - 1.0);
    const double b = (1.0 / K) / std::sqrt(K - 1.0);
    const double expected = std::sqrt(K * a * a + K * (K - 1.0) * b * b);
    CHECK(std::abs(nc2(W) - expected) < 1e-12);
  }
  CHECK(nc2(simplex_etf(6, 6, 1.0).W()) < 1e-14);
  CHECK_THROWS_AS(nc2(Eigen::MatrixXd::Zero(3, 4)), std::invalid_argument);
}

TEST_CASE("metrics are invariant under a joint rotation of the feature space") {
  const Dataset data = generate_dataset(reference_labels());
  ModelState st = gaussian_state(3, 6, data.size(), 2);
  const MetricReport before = compute_metrics(st, data);
  const Eigen::MatrixXd Q = random_orthogonal(6, 5);
  st.W = st.W * Q.transpose();
  st.H = Q * st.H;
  const MetricReport after = compute_metrics(st, data);
  for (const auto& [m, v] : before.nc1) CHECK(std::abs(v - after.nc1.at(m)) < 1e-9 * (1 + v));
  CHECK(std::abs(*before.nc2 - *after.nc2) < 1e-12);
  CHECK(std::abs(*before.nc3 - *after.nc3) < 1e-12);
  CHECK(std::abs(*before.ncm - *after.ncm) < 1e-12);
}

TEST_CASE("tag-wise metric counts and exact angles") {
  const Dataset data = generate_dataset(LabelConfig::balanced(4, {1, 1}));
  const ModelState st = gaussian_state(4, 10, data.size(), 9);
  const NcmResult r = ncm(st.H, data);
  CHECK(r.matched_count == 6);
  CHECK(r.all_count == 36);
  CHECK(r.skipped == 0);
  CHECK(std::abs(r.value - r.numerator / r.denominator) < 1e-15);

  // hand-built means: the pair mean lies exactly on its tag sum
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(4, data.size());
  for (int k = 0; k < 4; ++k) H(k, k) = 1.0;
  for (std::int64_t l = 0; l < 6; ++l) {
    const LabelSet s = lex_subset(4, 2, l);
    for (int k : s.members()) H(k, 4 + l) = 2.0;
  }
  const NcmResult exact = ncm(H, data);
  CHECK(exact.numerator < 1e-7);
  // each pair mean meets 1 equal sum, 4 sums sharing one tag (60 deg) and 1 disjoint sum (90 deg)
  const double pi = std::numbers::pi;
  CHECK(std::abs(exact.denominator - (4 * pi / 3 + pi / 2) / 6) < 1e-7);
  CHECK(exact.value < 1e-6);
}

TEST_CASE("tag-wise metric is about one for unstructured features") {
  const Dataset data = generate_dataset(LabelConfig::balanced(10, {1, 1}));
  double total = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) total += ncm(gaussian_state(10, 128, data.size(), 100 + t).H, data).value;
  CHECK(std::abs(total / trials - 1.0) < 0.1);
}

TEST_CASE("angles and metric errors") {
  Eigen::Vector2d u(1, 0), v(0, 3), w(-2, 0);
  CHECK(std::abs(*angle_between(u, v) - std::numbers::pi / 2) < 1e-15);
  CHECK(std::abs(*angle_between(u, w) - std::numbers::pi) < 1e-15);
  CHECK(*angle_between(u, u) == 0.0);
  CHECK_FALSE(angle_between(u, Eigen::Vector2d::Zero()).has_value());

  const Dataset single = generate_dataset(LabelConfig::balanced(3, {2}));
  const ModelState st = gaussian_state(3, 4, single.size(), 1);
  CHECK_THROWS_AS(ncm(st.H, single), std::invalid_argument);
  const MetricReport r = compute_metrics(st, single);
  CHECK_FALSE(r.ncm.has_value());
  CHECK(r.nc2.has_value());

  const Dataset no_singles = generate_dataset(LabelConfig::per_subset(3, {{0, 0, 0}, {2, 2, 2}}));
  const ModelState s2 = gaussian_state(3, 4, no_singles.size(), 1);
  CHECK_THROWS_AS(nc3(s2.W, s2.H, no_singles), std::invalid_argument);
  CHECK_THROWS_AS(class_means(Eigen::MatrixXd::Zero(4, 3), no_singles), std::invalid_argument);
  CHECK(std::isinf(nc1(Eigen::MatrixXd::Zero(4, no_singles.size()), no_singles).at(2)));
}

TEST_CASE("rescaling invariances and exact collapse") {
  const Dataset data = generate_dataset(reference_labels());
  const ModelState st = gaussian_state(3, 6, data.size(), 13);
  CHECK(std::abs(nc2(3.7 * st.W) - nc2(st.W)) < 1e-12);
  CHECK(std::abs(nc3(0.2 * st.W, 5.0 * st.H, data) - nc3(st.W, st.H, data)) < 1e-12);
  CHECK(std::abs(ncm(4.0 * st.H, data).value - ncm(st.H, data).value) < 1e-12);

  // every sample equals its class mean
  Eigen::MatrixXd dup = st.H;
  for (const auto& [key, mean] : class_means(st.H, data)) {
    const std::int64_t begin = data.class_begin(key.first, key.second);
    for (std::int64_t i = 0; i < data.config().count(key.first, key.second); ++i) dup.col(begin + i) = mean;
  }
  for (const auto& [m, v] : nc1(dup, data)) CHECK(v < 1e-20);

  // singleton means proportional to the classifier rows
  Eigen::MatrixXd dual = st.H;
  for (int k = 0; k < 3; ++k)
    for (std::int64_t i = 0; i < 10; ++i) dual.col(data.column(1, k, i)) = 2.5 * st.W.row(k).transpose();
  CHECK(nc3(st.W, dual, data) < 1e-14);
}

// Known not to hold for NC2 and NC3: the imbalanced minimiser is not a simplex
// ETF (see the README). Kept as a reported, non-fatal case.
TEST_CASE("imbalanced higher-multiplicity run keeps every metric below 0.05" * doctest::may_fail()) {
  const Dataset data = generate_dataset(LabelConfig::per_subset(4, {{20, 20, 20, 20}, {20, 20, 10, 10, 2, 0}}));
  const Hyperparams hp{8, 5e-3, 5e-3, 1e-3};
  TrainConfig tc;
  tc.record_metrics = false;
  const Trajectory t = train(init_state(data, hp, 0, tc.init_scale), data, hp, tc);
  REQUIRE(t.converged);
  const MetricReport r = compute_metrics(t.final_state, data);
  for (const auto& [m, v] : r.nc1) CHECK(v < 0.05);
  CHECK(r.ncm.value() < 0.05);
  CHECK(r.nc2.value() < 0.05);
  CHECK(r.nc3.value() < 0.05);
}
