#include "mlnc/labelspace.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mlnc {

std::int64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t result = 1;
  for (int j = 1; j <= k; ++j) {
    const std::int64_t num = n - k + j;
    // result * num / j stays integral at every step
    if (result > std::numeric_limits<std::int64_t>::max() / num) {
      throw std::overflow_error("binomial(" + std::to_string(n) + ", " + std::to_string(k) + ") overflows int64");
    }
    result = result * num / j;
  }
  return result;
}

LabelSet LabelSet::from_members(int K, std::vector<int> members) {
  if (members.empty()) throw std::invalid_argument("label set must be nonempty");
  if (static_cast<int>(members.size()) >= K) throw std::invalid_argument("label set must be a proper subset of [K]");
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (members[j] < 0 || members[j] >= K) throw std::invalid_argument("label out of range [0, K)");
    if (j > 0 && members[j] <= members[j - 1]) {
      throw std::invalid_argument("label set must be strictly increasing");
    }
  }
  return LabelSet(std::move(members));
}

LabelSet LabelSet::singleton(int K, int cls) { return from_members(K, {cls}); }

bool LabelSet::contains(int cls) const { return std::binary_search(members_.begin(), members_.end(), cls); }

LabelSet lex_subset(int K, int m, std::int64_t rank) {
  if (m < 1 || m >= K) throw std::invalid_argument("lex_subset: need 1 <= m < K");
  const std::int64_t total = binomial(K, m);
  if (rank < 0 || rank >= total) throw std::out_of_range("lex_subset: rank out of range");

  std::vector<int> members;
  members.reserve(m);
  int next = 0;
  for (int pos = 0; pos < m; ++pos) {
    for (int cand = next;; ++cand) {
      // subsets whose pos-th element is cand, with the rest drawn from (cand, K)
      const std::int64_t block = binomial(K - cand - 1, m - pos - 1);
      if (rank < block) {
        members.push_back(cand);
        next = cand + 1;
        break;
      }
      rank -= block;
    }
  }
  return LabelSet::from_members(K, std::move(members));
}

std::int64_t lex_rank(int K, const LabelSet& set) {
  const auto members = set.members();
  const int m = set.multiplicity();
  if (m < 1 || m >= K || members.back() >= K) throw std::invalid_argument("lex_rank: invalid subset for K");
  std::int64_t rank = 0;
  int next = 0;
  for (int pos = 0; pos < m; ++pos) {
    for (int cand = next; cand < members[pos]; ++cand) rank += binomial(K - cand - 1, m - pos - 1);
    next = members[pos] + 1;
  }
  return rank;
}

Eigen::VectorXi multi_hot(int K, const LabelSet& set) {
  Eigen::VectorXi y = Eigen::VectorXi::Zero(K);
  for (int cls : set.members()) {
    if (cls >= K) throw std::invalid_argument("multi_hot: label out of range");
    y(cls) = 1;
  }
  return y;
}

LabelMatrix label_matrix(int K, int m) {
  if (m < 1 || m >= K) throw std::invalid_argument("label_matrix: need 1 <= m < K");
  const std::int64_t cols = binomial(K, m);
  LabelMatrix out{K, m, Eigen::MatrixXi::Zero(K, cols)};
  for (std::int64_t k = 0; k < cols; ++k) out.Y.col(k) = multi_hot(K, lex_subset(K, m, k));
  return out;
}

GramConstants pinv_label_matrix(int K, int m) {
  if (m < 1 || m >= K) throw std::invalid_argument("pinv_label_matrix: need 1 <= m < K");
  GramConstants g;
  g.a = Rational(m - 1, K - 1) * binomial(K - 1, m - 1);
  g.b = Rational(m, K) * binomial(K, m);
  g.c = Rational(m, K - 1) * binomial(K - 1, m);
  g.tau = (g.a + g.c) / (g.b * g.c);
  g.eta = -g.a / (g.b * g.c);
  return g;
}

RationalMatrix::RationalMatrix(std::int64_t rows, std::int64_t cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), Rational(0)) {}

RationalMatrix RationalMatrix::from_integers(const Eigen::MatrixXi& m) {
  RationalMatrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

RationalMatrix RationalMatrix::identity(std::int64_t n) {
  RationalMatrix out(n, n);
  for (std::int64_t j = 0; j < n; ++j) out(j, j) = 1;
  return out;
}

RationalMatrix RationalMatrix::constant(std::int64_t rows, std::int64_t cols, Rational v) {
  RationalMatrix out(rows, cols);
  std::fill(out.data_.begin(), out.data_.end(), v);
  return out;
}

RationalMatrix RationalMatrix::transpose() const {
  RationalMatrix out(cols_, rows_);
  for (std::int64_t r = 0; r < rows_; ++r)
    for (std::int64_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

RationalMatrix RationalMatrix::operator*(const RationalMatrix& rhs) const {
  if (cols_ != rhs.rows_) throw std::invalid_argument("RationalMatrix: shape mismatch in product");
  RationalMatrix out(rows_, rhs.cols_);
  for (std::int64_t r = 0; r < rows_; ++r) {
    for (std::int64_t k = 0; k < cols_; ++k) {
      const Rational& lhs = (*this)(r, k);
      if (lhs == Rational(0)) continue;
      for (std::int64_t c = 0; c < rhs.cols_; ++c) out(r, c) += lhs * rhs(k, c);
    }
  }
  return out;
}

RationalMatrix RationalMatrix::operator+(const RationalMatrix& rhs) const {
  if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw std::invalid_argument("RationalMatrix: shape mismatch");
  RationalMatrix out = *this;
  for (std::size_t j = 0; j < data_.size(); ++j) out.data_[j] += rhs.data_[j];
  return out;
}

RationalMatrix RationalMatrix::operator-(const RationalMatrix& rhs) const { return *this + rhs.scaled(-1); }

RationalMatrix RationalMatrix::scaled(Rational s) const {
  RationalMatrix out = *this;
  for (auto& v : out.data_) v *= s;
  return out;
}

Rational RationalMatrix::max_abs() const {
  Rational best(0);
  for (const auto& v : data_) best = std::max(best, boost::abs(v));
  return best;
}

RationalMatrix pinv_matrix(const LabelMatrix& Y, const GramConstants& g) {
  const RationalMatrix y = RationalMatrix::from_integers(Y.Y);
  return y.scaled(g.tau) + RationalMatrix::constant(y.rows(), y.cols(), g.eta);
}

MoorePenroseCheck check_moore_penrose(int K, int m) {
  const LabelMatrix Y = label_matrix(K, m);
  const GramConstants g = pinv_label_matrix(K, m);
  const RationalMatrix A = RationalMatrix::from_integers(Y.Y).transpose();  // C(K,m) x K
  const RationalMatrix P = pinv_matrix(Y, g);                               // K x C(K,m)

  MoorePenroseCheck out;
  const RationalMatrix PA = P * A;
  const RationalMatrix AP = A * P;
  out.identity_residual = (PA - RationalMatrix::identity(K)).max_abs();
  out.left_inverse = out.identity_residual == Rational(0);
  out.reproduces_a = AP * A == A;
  out.reproduces_pinv = PA * P == P;
  out.a_pinv_symmetric = AP.transpose() == AP;
  out.pinv_a_symmetric = PA.transpose() == PA;
  return out;
}

GramCheck check_gram_identities(int K, int m) {
  const LabelMatrix Y = label_matrix(K, m);
  const GramConstants g = pinv_label_matrix(K, m);
  const RationalMatrix y = RationalMatrix::from_integers(Y.Y);
  const RationalMatrix yt = y.transpose();
  const std::int64_t cols = y.cols();
  const RationalMatrix I = RationalMatrix::identity(K);
  const RationalMatrix theta_kk = RationalMatrix::constant(K, K, 1);

  GramCheck out;
  out.gram = y * yt == I.scaled(g.b - g.a) + theta_kk.scaled(g.a);
  out.complement = y * (RationalMatrix::constant(cols, K, 1) - yt) == (theta_kk - I).scaled(g.c);
  out.column_sums = (Y.Y.colwise().sum().array() == m).all();
  const Rational row_target = Rational(m * binomial(K, m), K);
  out.row_sums = true;
  for (int r = 0; r < K; ++r) out.row_sums = out.row_sums && Rational(Y.Y.row(r).sum()) == row_target;
  out.pascal = g.b - g.a == Rational(binomial(K - 2, m - 1));
  return out;
}

LabelConfig LabelConfig::balanced(int K, std::vector<std::int64_t> per_subset_count) {
  LabelConfig cfg;
  cfg.K = K;
  cfg.M = static_cast<int>(per_subset_count.size());
  for (int m = 1; m <= cfg.M; ++m) {
    const std::int64_t cols = (m < K) ? binomial(K, m) : 0;
    cfg.counts.emplace_back(static_cast<std::size_t>(cols), per_subset_count[m - 1]);
  }
  cfg.validate();
  return cfg;
}

LabelConfig LabelConfig::per_subset(int K, std::vector<std::vector<std::int64_t>> counts) {
  LabelConfig cfg;
  cfg.K = K;
  cfg.M = static_cast<int>(counts.size());
  cfg.counts = std::move(counts);
  cfg.validate();
  return cfg;
}

void LabelConfig::validate() const {
  if (K < 2) throw std::invalid_argument("LabelConfig: K must be at least 2");
  if (M < 1 || M > K - 1) throw std::invalid_argument("LabelConfig: need 1 <= M <= K-1");
  if (static_cast<int>(counts.size()) != M) throw std::invalid_argument("LabelConfig: need one count list per multiplicity");
  bool any = false;
  for (int m = 1; m <= M; ++m) {
    const auto& row = counts[m - 1];
    if (static_cast<std::int64_t>(row.size()) != binomial(K, m)) {
      throw std::invalid_argument("LabelConfig: multiplicity " + std::to_string(m) + " needs C(K,m) = " +
                                  std::to_string(binomial(K, m)) + " counts, got " + std::to_string(row.size()));
    }
    for (auto c : row) {
      if (c < 0) throw std::invalid_argument("LabelConfig: counts must be nonnegative");
      any = any || c > 0;
    }
  }
  if (!any) throw std::invalid_argument("LabelConfig: all counts are zero");
}

bool LabelConfig::is_balanced(int m) const {
  const auto& row = counts.at(m - 1);
  return std::adjacent_find(row.begin(), row.end(), std::not_equal_to<>()) == row.end();
}

bool LabelConfig::is_balanced() const {
  for (int m = 1; m <= M; ++m)
    if (!is_balanced(m)) return false;
  return true;
}

std::optional<std::int64_t> LabelConfig::n(int m) const {
  if (!is_balanced(m)) return std::nullopt;
  return counts.at(m - 1).front();
}

std::int64_t LabelConfig::multiplicity_total(int m) const {
  const auto& row = counts.at(m - 1);
  return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

std::int64_t LabelConfig::total() const {
  std::int64_t n_total = 0;
  for (int m = 1; m <= M; ++m) n_total += multiplicity_total(m);
  return n_total;
}

Dataset generate_dataset(const LabelConfig& config) {
  config.validate();
  Dataset data;
  data.config_ = config;
  data.samples_.reserve(static_cast<std::size_t>(config.total()));
  for (int m = 1; m <= config.M; ++m) {
    const std::int64_t cols = binomial(config.K, m);
    std::vector<LabelSet> sets;
    std::vector<std::int64_t> begins;
    sets.reserve(cols);
    begins.reserve(cols);
    data.block_begin_.push_back(static_cast<std::int64_t>(data.samples_.size()));
    for (std::int64_t k = 0; k < cols; ++k) {
      sets.push_back(lex_subset(config.K, m, k));
      begins.push_back(static_cast<std::int64_t>(data.samples_.size()));
      for (std::int64_t i = 0; i < config.count(m, k); ++i) data.samples_.push_back({m, k, i});
    }
    data.subsets_.push_back(std::move(sets));
    data.class_begin_.push_back(std::move(begins));
  }
  return data;
}

}  // namespace mlnc
