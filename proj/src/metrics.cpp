#include "mlnc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

namespace mlnc {

namespace {

constexpr double kPinvCutoff = 1e-10;

// Sum of the singleton means of the given classes, or nullopt if one is absent.
std::optional<Eigen::VectorXd> singleton_sum(const ClassMeans& means, std::span<const int> classes, Eigen::Index d) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
  for (int cls : classes) {
    const auto it = means.find({1, cls});
    if (it == means.end()) return std::nullopt;
    acc += it->second;
  }
  return acc;
}

// Visits every size-m combination of the given values in lexicographic order.
template <typename Fn>
void for_each_combination(const std::vector<int>& values, int m, Fn&& fn) {
  const int n = static_cast<int>(values.size());
  if (m > n) return;
  std::vector<int> idx(m);
  for (int j = 0; j < m; ++j) idx[j] = j;
  std::vector<int> pick(m);
  while (true) {
    for (int j = 0; j < m; ++j) pick[j] = values[idx[j]];
    fn(std::span<const int>(pick));
    int pos = m - 1;
    while (pos >= 0 && idx[pos] == n - m + pos) --pos;
    if (pos < 0) return;
    ++idx[pos];
    for (int j = pos + 1; j < m; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace

std::optional<double> angle_between(const Eigen::Ref<const Eigen::VectorXd>& u,
                                    const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return std::nullopt;
  const double cosine = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return std::acos(cosine);
}

ClassMeans class_means(const Eigen::MatrixXd& H, const Dataset& data) {
  if (H.cols() != data.size()) throw std::invalid_argument("class_means: H must have one column per sample");
  ClassMeans out;
  for (int m = 1; m <= data.M(); ++m) {
    const auto& sets = data.subsets(m);
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(sets.size()); ++k) {
      const std::int64_t count = data.config().count(m, k);
      if (count == 0) continue;
      out[{m, k}] = H.middleCols(data.class_begin(m, k), count).rowwise().mean();
    }
  }
  return out;
}

std::map<int, double> nc1(const Eigen::MatrixXd& H, const Dataset& data) {
  const ClassMeans means = class_means(H, data);
  const Eigen::Index d = H.rows();
  std::map<int, double> out;
  for (int m = 1; m <= data.M(); ++m) {
    const std::int64_t width = data.block_size(m);
    if (width == 0) continue;
    std::vector<Eigen::VectorXd> present;
    for (const auto& [key, mean] : means)
      if (key.first == m) present.push_back(mean);
    if (present.size() < 2) continue;

    const auto block = H.middleCols(data.block_begin(m), width);
    const Eigen::VectorXd global_mean = block.rowwise().mean();

    Eigen::MatrixXd sigma_w = Eigen::MatrixXd::Zero(d, d);
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(data.subsets(m).size()); ++k) {
      const std::int64_t count = data.config().count(m, k);
      if (count == 0) continue;
      const Eigen::MatrixXd centered =
          H.middleCols(data.class_begin(m, k), count).colwise() - means.at({m, k});
      sigma_w.noalias() += centered * centered.transpose();
    }
    sigma_w /= static_cast<double>(width);

    Eigen::MatrixXd sigma_b = Eigen::MatrixXd::Zero(d, d);
    for (const auto& mean : present) {
      const Eigen::VectorXd diff = mean - global_mean;
      sigma_b.noalias() += diff * diff.transpose();
    }
    const double classes = static_cast<double>(present.size());
    sigma_b /= classes;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_b);
    const Eigen::VectorXd vals = eig.eigenvalues();
    const double top = vals.cwiseAbs().maxCoeff();
    if (!(top > 0.0)) {
      out[m] = std::numeric_limits<double>::infinity();
      continue;
    }
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
    for (Eigen::Index j = 0; j < vals.size(); ++j)
      if (vals(j) > kPinvCutoff * top) inv(j) = 1.0 / vals(j);
    const Eigen::MatrixXd pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    out[m] = (sigma_w * pinv).trace() / classes;
  }
  return out;
}

double nc2(const Eigen::MatrixXd& W) {
  const Eigen::Index K = W.rows();
  const Eigen::MatrixXd gram = W * W.transpose();
  const double gram_norm = gram.norm();
  if (!(gram_norm > 0.0)) throw std::invalid_argument("nc2: W must be nonzero");
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / static_cast<double>(K));
  return (gram / gram_norm - centering / centering.norm()).norm();
}

double nc3(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H, const Dataset& data) {
  const ClassMeans means = class_means(H, data);
  const int K = data.K();
  Eigen::MatrixXd singles(H.rows(), K);
  for (int k = 0; k < K; ++k) {
    const auto it = means.find({1, k});
    if (it == means.end()) throw std::invalid_argument("nc3: every multiplicity-1 class must be present");
    singles.col(k) = it->second;
  }
  const double wn = W.norm();
  const double hn = singles.norm();
  if (!(wn > 0.0) || !(hn > 0.0)) throw std::invalid_argument("nc3: W and the class means must be nonzero");
  return (W / wn - singles.transpose() / hn).norm();
}

NcmResult ncm(const Eigen::MatrixXd& H, const Dataset& data, int m) {
  if (m < 2 || m > data.M()) throw std::invalid_argument("ncm: multiplicity must be in [2, M]");
  const ClassMeans means = class_means(H, data);
  const Eigen::Index d = H.rows();

  std::vector<int> singles;
  for (int k = 0; k < data.K(); ++k)
    if (means.contains({1, k})) singles.push_back(k);

  // Every sum of m distinct present singleton means.
  std::vector<Eigen::VectorXd> all_sums;
  for_each_combination(singles, m, [&](std::span<const int> pick) { all_sums.push_back(*singleton_sum(means, pick, d)); });

  NcmResult out;
  std::vector<double> matched;
  std::vector<double> all;
  for (const auto& [key, mean] : means) {
    if (key.first != m) continue;
    const LabelSet& set = data.subset(m, key.second);
    if (const auto target = singleton_sum(means, set.members(), d)) {
      if (const auto a = angle_between(mean, *target)) {
        matched.push_back(*a);
      } else {
        ++out.skipped;
      }
    }
    for (const auto& s : all_sums) {
      if (const auto a = angle_between(mean, s)) {
        all.push_back(*a);
      } else {
        ++out.skipped;
      }
    }
  }
  if (matched.empty()) throw std::invalid_argument("ncm: no multiplicity-m class with all components present");
  out.matched_count = static_cast<std::int64_t>(matched.size());
  out.all_count = static_cast<std::int64_t>(all.size());
  out.numerator = pairwise_sum(matched) / static_cast<double>(matched.size());
  out.denominator = pairwise_sum(all) / static_cast<double>(all.size());
  out.value = out.denominator > 0.0 ? out.numerator / out.denominator : std::numeric_limits<double>::infinity();
  return out;
}

MetricReport compute_metrics(const ModelState& state, const Dataset& data) {
  MetricReport r;
  r.nc1 = nc1(state.H, data);
  try {
    r.nc2 = nc2(state.W);
  } catch (const std::invalid_argument&) {
  }
  try {
    r.nc3 = nc3(state.W, state.H, data);
  } catch (const std::invalid_argument&) {
  }
  for (int m = 2; m <= data.M(); ++m) {
    try {
      r.ncm_by_multiplicity[m] = ncm(state.H, data, m).value;
    } catch (const std::invalid_argument&) {
    }
  }
  if (r.ncm_by_multiplicity.contains(2)) r.ncm = r.ncm_by_multiplicity.at(2);

  const Eigen::VectorXd row_norms = state.W.rowwise().norm();
  const double top = row_norms.maxCoeff();
  r.w_norm_spread = top > 0.0 ? (top - row_norms.minCoeff()) / top : 0.0;
  r.bias_residual = (state.b.array() - state.b.mean()).matrix().norm();
  return r;
}

}  // namespace mlnc
