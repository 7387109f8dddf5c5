#pragma once

// The unconstrained-feature-model objective with pick-all-labels cross-entropy:
//
//   f(W, H, b) = (1/N) sum_i L_PAL(W h_i + b, S_i)
//                + lambda_W |W|_F^2 + lambda_H |H|_F^2 + lambda_b |b|^2
//
// with L_PAL(z, S) = sum_{k in S} -log softmax(z)_k.

#include <cstdint>
#include <map>
#include <span>

#include <Eigen/Core>

#include "mlnc/labelspace.hpp"

namespace mlnc {

struct Hyperparams {
  int d = 0;
  double lambda_W = 0.0;
  double lambda_H = 0.0;
  double lambda_b = 0.0;

  void validate() const;
};

/// W is K x d (row k is the class-k classifier), H is d x N in dataset
/// column order, b has length K. The same shape doubles as a gradient or a
/// search direction.
struct ModelState {
  Eigen::MatrixXd W;
  Eigen::MatrixXd H;
  Eigen::VectorXd b;

  static ModelState zeros(int K, int d, std::int64_t N);
  static ModelState zeros_like(const ModelState& other);

  double dot(const ModelState& other) const;
  double squared_norm() const { return dot(*this); }
  double norm() const;
  bool all_finite() const;
  bool same_shape(const ModelState& other) const;

  ModelState& operator+=(const ModelState& rhs);
  ModelState& operator-=(const ModelState& rhs);
  ModelState& operator*=(double s);
  friend ModelState operator+(ModelState lhs, const ModelState& rhs) { return lhs += rhs; }
  friend ModelState operator-(ModelState lhs, const ModelState& rhs) { return lhs -= rhs; }
  friend ModelState operator*(double s, ModelState v) { return v *= s; }
};

using Gradient = ModelState;

/// Throws std::invalid_argument unless state matches (data, hp).
void check_shapes(const ModelState& state, const Dataset& data, const Hyperparams& hp);

/// Max-shifted softmax. Throws NumericError on non-finite input.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& z);

double pal_ce_loss(const Eigen::Ref<const Eigen::VectorXd>& z, const LabelSet& set);

/// |S| softmax(z) - 1_S.
Eigen::VectorXd pal_ce_grad(const Eigen::Ref<const Eigen::VectorXd>& z, const LabelSet& set);

/// Logits Z = W H + b 1^T.
Eigen::MatrixXd logits(const ModelState& state);

double objective(const ModelState& state, const Dataset& data, const Hyperparams& hp);
Gradient gradient(const ModelState& state, const Dataset& data, const Hyperparams& hp);

struct Evaluation {
  double f = 0.0;
  Gradient grad;
};

/// Objective and gradient from one pass over the logits.
Evaluation evaluate(const ModelState& state, const Dataset& data, const Hyperparams& hp);

/// g_m: mean PAL loss over the multiplicity-m samples, for every present m.
/// sum_m (N_m / N) g_m equals the data term of the objective.
std::map<int, double> loss_by_multiplicity(const ModelState& state, const Dataset& data);

/// Exact Hessian-vector product of the objective at state along direction.
Gradient hessian_vector_product(const ModelState& state, const Dataset& data, const Hyperparams& hp,
                                const ModelState& direction);

/// Fixed-order pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> values);

}  // namespace mlnc
