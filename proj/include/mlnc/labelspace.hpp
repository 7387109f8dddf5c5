#pragma once

// Multi-label class combinatorics: lexicographic subset indexing, multi-hot
// encodings, label matrices and the UFM sample layout.
//
// Classes are 0-based throughout: a label set over K classes is a strictly
// increasing list drawn from {0, ..., K-1}, and subset ranks are 0-based
// positions in lexicographic order.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <boost/rational.hpp>

namespace mlnc {

using Rational = boost::rational<std::int64_t>;

/// C(n, k); zero when k < 0 or k > n. Throws std::overflow_error past int64.
std::int64_t binomial(int n, int k);

class LabelSet {
 public:
  LabelSet() = default;

  /// Validates K-relative invariants: nonempty, proper subset, strictly increasing.
  static LabelSet from_members(int K, std::vector<int> members);
  static LabelSet singleton(int K, int cls);

  std::span<const int> members() const { return members_; }
  int multiplicity() const { return static_cast<int>(members_.size()); }
  bool contains(int cls) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
  friend auto operator<=>(const LabelSet&, const LabelSet&) = default;

 private:
  explicit LabelSet(std::vector<int> members) : members_(std::move(members)) {}
  std::vector<int> members_;
};

/// rank-th (0-based) size-m subset of {0..K-1} in lexicographic order.
LabelSet lex_subset(int K, int m, std::int64_t rank);
/// Inverse of lex_subset.
std::int64_t lex_rank(int K, const LabelSet& set);

Eigen::VectorXi multi_hot(int K, const LabelSet& set);

/// K x C(K,m) 0/1 matrix; column k is the multi-hot vector of lex_subset(K,m,k).
struct LabelMatrix {
  int K = 0;
  int m = 0;
  Eigen::MatrixXi Y;
};

LabelMatrix label_matrix(int K, int m);

/// Gram constants of the label matrix and the coefficients of its
/// pseudo-inverse (Y^T)^+ = tau * Y + eta * Theta.
///   Y Y^T           = (b - a) I + a Theta
///   Y (Theta - Y^T) = c (Theta - I)
struct GramConstants {
  Rational a;
  Rational b;
  Rational c;
  Rational tau;
  Rational eta;
};

GramConstants pinv_label_matrix(int K, int m);

/// Dense matrix over exact rationals, only as large as the identity checks need.
class RationalMatrix {
 public:
  RationalMatrix(std::int64_t rows, std::int64_t cols);
  static RationalMatrix from_integers(const Eigen::MatrixXi& m);
  static RationalMatrix identity(std::int64_t n);
  static RationalMatrix constant(std::int64_t rows, std::int64_t cols, Rational v);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  Rational& operator()(std::int64_t r, std::int64_t c) { return data_[r * cols_ + c]; }
  const Rational& operator()(std::int64_t r, std::int64_t c) const { return data_[r * cols_ + c]; }

  RationalMatrix transpose() const;
  RationalMatrix operator*(const RationalMatrix& rhs) const;
  RationalMatrix operator+(const RationalMatrix& rhs) const;
  RationalMatrix operator-(const RationalMatrix& rhs) const;
  RationalMatrix scaled(Rational s) const;
  /// max |entry|, exact.
  Rational max_abs() const;

  friend bool operator==(const RationalMatrix&, const RationalMatrix&) = default;

 private:
  std::int64_t rows_;
  std::int64_t cols_;
  std::vector<Rational> data_;
};

/// tau * Y + eta * Theta, the claimed pseudo-inverse of Y^T (K x C(K,m)).
RationalMatrix pinv_matrix(const LabelMatrix& Y, const GramConstants& g);

struct MoorePenroseCheck {
  bool left_inverse = false;    // (tau Y + eta Theta) Y^T = I
  bool reproduces_a = false;    // A A^+ A = A,   A = Y^T
  bool reproduces_pinv = false; // A^+ A A^+ = A^+
  bool a_pinv_symmetric = false;
  bool pinv_a_symmetric = false;
  Rational identity_residual;   // max |(tau Y + eta Theta) Y^T - I|
  bool all() const {
    return left_inverse && reproduces_a && reproduces_pinv && a_pinv_symmetric && pinv_a_symmetric;
  }
};

MoorePenroseCheck check_moore_penrose(int K, int m);

struct GramCheck {
  bool gram = false;        // Y Y^T = (b-a) I + a Theta
  bool complement = false;  // Y (Theta - Y^T) = c (Theta - I)
  bool column_sums = false; // every column sums to m
  bool row_sums = false;    // every row sums to m C(K,m) / K
  bool pascal = false;      // b - a = C(K-2, m-1)
  bool all() const { return gram && complement && column_sums && row_sums && pascal; }
};

GramCheck check_gram_identities(int K, int m);

/// Per-subset sample counts. counts[m-1][k] is the number of samples carrying
/// the k-th size-m subset; an all-zero multiplicity is simply absent.
struct LabelConfig {
  int K = 0;
  int M = 0;
  std::vector<std::vector<std::int64_t>> counts;

  /// n_m samples for every size-m subset.
  static LabelConfig balanced(int K, std::vector<std::int64_t> per_subset_count);
  static LabelConfig per_subset(int K, std::vector<std::vector<std::int64_t>> counts);

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;

  std::int64_t count(int m, std::int64_t k) const { return counts.at(m - 1).at(k); }
  bool is_balanced(int m) const;
  bool is_balanced() const;
  /// The common per-subset count n_m if multiplicity m is balanced.
  std::optional<std::int64_t> n(int m) const;
  /// N_m, the number of multiplicity-m samples.
  std::int64_t multiplicity_total(int m) const;
  std::int64_t total() const;
  bool present(int m) const { return multiplicity_total(m) > 0; }
};

struct Sample {
  int m = 0;
  std::int64_t k = 0;
  std::int64_t i = 0;
};

/// Triple-indexed samples in block order: multiplicity, then subset rank, then
/// repeat index. Column j of H belongs to samples()[j].
class Dataset {
 public:
  const LabelConfig& config() const { return config_; }
  int K() const { return config_.K; }
  int M() const { return config_.M; }
  std::int64_t size() const { return static_cast<std::int64_t>(samples_.size()); }

  std::span<const Sample> samples() const { return samples_; }
  const LabelSet& subset(int m, std::int64_t k) const { return subsets_.at(m - 1).at(k); }
  const std::vector<LabelSet>& subsets(int m) const { return subsets_.at(m - 1); }
  const LabelSet& label_of(std::int64_t column) const {
    const Sample& s = samples_[column];
    return subsets_[s.m - 1][s.k];
  }
  int multiplicity_of(std::int64_t column) const { return samples_[column].m; }

  /// First column of the multiplicity-m block and its width N_m.
  std::int64_t block_begin(int m) const { return block_begin_.at(m - 1); }
  std::int64_t block_size(int m) const { return config_.multiplicity_total(m); }
  /// First column of subset (m, k); its samples occupy count(m,k) columns.
  std::int64_t class_begin(int m, std::int64_t k) const { return class_begin_.at(m - 1).at(k); }
  std::int64_t column(int m, std::int64_t k, std::int64_t i) const { return class_begin(m, k) + i; }

  friend Dataset generate_dataset(const LabelConfig& config);

 private:
  LabelConfig config_;
  std::vector<Sample> samples_;
  std::vector<std::vector<LabelSet>> subsets_;
  std::vector<std::int64_t> block_begin_;
  std::vector<std::vector<std::int64_t>> class_begin_;
};

Dataset generate_dataset(const LabelConfig& config);

}  // namespace mlnc
