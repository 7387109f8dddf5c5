#include "mlnc/ufm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mlnc/errors.hpp"

namespace mlnc {

void Hyperparams::validate() const {
  if (d < 1) throw std::invalid_argument("Hyperparams: d must be positive");
  if (!(lambda_W > 0.0) || !(lambda_H > 0.0)) throw std::invalid_argument("Hyperparams: lambda_W and lambda_H must be > 0");
  if (!(lambda_b >= 0.0)) throw std::invalid_argument("Hyperparams: lambda_b must be >= 0");
  if (!std::isfinite(lambda_W) || !std::isfinite(lambda_H) || !std::isfinite(lambda_b)) {
    throw std::invalid_argument("Hyperparams: weight decays must be finite");
  }
}

ModelState ModelState::zeros(int K, int d, std::int64_t N) {
  return {Eigen::MatrixXd::Zero(K, d), Eigen::MatrixXd::Zero(d, N), Eigen::VectorXd::Zero(K)};
}

ModelState ModelState::zeros_like(const ModelState& other) {
  return {Eigen::MatrixXd::Zero(other.W.rows(), other.W.cols()), Eigen::MatrixXd::Zero(other.H.rows(), other.H.cols()),
          Eigen::VectorXd::Zero(other.b.size())};
}

double ModelState::dot(const ModelState& other) const {
  return (W.array() * other.W.array()).sum() + (H.array() * other.H.array()).sum() + b.dot(other.b);
}

double ModelState::norm() const { return std::sqrt(squared_norm()); }

bool ModelState::all_finite() const { return W.allFinite() && H.allFinite() && b.allFinite(); }

bool ModelState::same_shape(const ModelState& o) const {
  return W.rows() == o.W.rows() && W.cols() == o.W.cols() && H.rows() == o.H.rows() && H.cols() == o.H.cols() &&
         b.size() == o.b.size();
}

ModelState& ModelState::operator+=(const ModelState& rhs) {
  W += rhs.W;
  H += rhs.H;
  b += rhs.b;
  return *this;
}

ModelState& ModelState::operator-=(const ModelState& rhs) {
  W -= rhs.W;
  H -= rhs.H;
  b -= rhs.b;
  return *this;
}

ModelState& ModelState::operator*=(double s) {
  W *= s;
  H *= s;
  b *= s;
  return *this;
}

void check_shapes(const ModelState& state, const Dataset& data, const Hyperparams& hp) {
  const int K = data.K();
  if (state.W.rows() != K || state.W.cols() != hp.d) throw std::invalid_argument("W must be K x d");
  if (state.H.rows() != hp.d || state.H.cols() != data.size()) throw std::invalid_argument("H must be d x N");
  if (state.b.size() != K) throw std::invalid_argument("b must have length K");
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (!z.allFinite()) throw NumericError("non-finite logits");
}

// Per-sample losses and the logit-gradient matrix G (column i = pal_ce_grad).
struct DataTerm {
  std::vector<double> losses;
  Eigen::MatrixXd G;
};

DataTerm data_term(const ModelState& state, const Dataset& data, bool want_grad) {
  const Eigen::MatrixXd Z = logits(state);
  if (!Z.allFinite()) throw NumericError("non-finite logits");
  const std::int64_t N = data.size();
  DataTerm out;
  out.losses.resize(static_cast<std::size_t>(N));
  if (want_grad) out.G.resize(Z.rows(), N);
  for (std::int64_t j = 0; j < N; ++j) {
    const auto z = Z.col(j);
    const LabelSet& set = data.label_of(j);
    const double mx = z.maxCoeff();
    const Eigen::VectorXd e = (z.array() - mx).exp();
    const double total = e.sum();
    const double lse = mx + std::log(total);
    double loss = 0.0;
    for (int cls : set.members()) loss += lse - z(cls);
    out.losses[static_cast<std::size_t>(j)] = loss;
    if (want_grad) {
      out.G.col(j) = (static_cast<double>(set.multiplicity()) / total) * e;
      for (int cls : set.members()) out.G(cls, j) -= 1.0;
    }
  }
  return out;
}

double regularizer(const ModelState& s, const Hyperparams& hp) {
  return hp.lambda_W * s.W.squaredNorm() + hp.lambda_H * s.H.squaredNorm() + hp.lambda_b * s.b.squaredNorm();
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& z) {
  require_finite(z);
  const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double pal_ce_loss(const Eigen::Ref<const Eigen::VectorXd>& z, const LabelSet& set) {
  require_finite(z);
  const double lse = log_sum_exp(z);
  double loss = 0.0;
  for (int cls : set.members()) loss += lse - z(cls);
  return loss;
}

Eigen::VectorXd pal_ce_grad(const Eigen::Ref<const Eigen::VectorXd>& z, const LabelSet& set) {
  Eigen::VectorXd g = static_cast<double>(set.multiplicity()) * softmax(z);
  for (int cls : set.members()) g(cls) -= 1.0;
  return g;
}

Eigen::MatrixXd logits(const ModelState& state) {
  Eigen::MatrixXd Z = state.W * state.H;
  Z.colwise() += state.b;
  return Z;
}

double objective(const ModelState& state, const Dataset& data, const Hyperparams& hp) {
  check_shapes(state, data, hp);
  const DataTerm term = data_term(state, data, false);
  return pairwise_sum(term.losses) / static_cast<double>(data.size()) + regularizer(state, hp);
}

Evaluation evaluate(const ModelState& state, const Dataset& data, const Hyperparams& hp) {
  check_shapes(state, data, hp);
  const DataTerm term = data_term(state, data, true);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  Evaluation out;
  out.f = pairwise_sum(term.losses) * inv_n + regularizer(state, hp);
  out.grad.W = inv_n * (term.G * state.H.transpose()) + 2.0 * hp.lambda_W * state.W;
  out.grad.H = inv_n * (state.W.transpose() * term.G) + 2.0 * hp.lambda_H * state.H;
  out.grad.b = inv_n * term.G.rowwise().sum() + 2.0 * hp.lambda_b * state.b;
  return out;
}

Gradient gradient(const ModelState& state, const Dataset& data, const Hyperparams& hp) {
  return evaluate(state, data, hp).grad;
}

std::map<int, double> loss_by_multiplicity(const ModelState& state, const Dataset& data) {
  if (state.H.cols() != data.size() || state.W.rows() != data.K() || state.W.cols() != state.H.rows()) {
    throw std::invalid_argument("loss_by_multiplicity: shape mismatch");
  }
  const DataTerm term = data_term(state, data, false);
  std::map<int, double> out;
  for (int m = 1; m <= data.M(); ++m) {
    const std::int64_t width = data.block_size(m);
    if (width == 0) continue;
    const auto block = std::span<const double>(term.losses).subspan(data.block_begin(m), width);
    out[m] = pairwise_sum(block) / static_cast<double>(width);
  }
  return out;
}

Gradient hessian_vector_product(const ModelState& state, const Dataset& data, const Hyperparams& hp,
                                const ModelState& direction) {
  check_shapes(state, data, hp);
  if (!direction.same_shape(state)) throw std::invalid_argument("hessian_vector_product: direction shape mismatch");

  const Eigen::MatrixXd Z = logits(state);
  if (!Z.allFinite()) throw NumericError("non-finite logits");
  const std::int64_t N = data.size();
  const int K = data.K();

  // First-order change of the logits along the direction.
  Eigen::MatrixXd dZ = direction.W * state.H + state.W * direction.H;
  dZ.colwise() += direction.b;

  Eigen::MatrixXd G(K, N);
  Eigen::MatrixXd dG(K, N);
  for (std::int64_t j = 0; j < N; ++j) {
    const LabelSet& set = data.label_of(j);
    const double m = set.multiplicity();
    const Eigen::VectorXd p = softmax(Z.col(j));
    G.col(j) = m * p;
    for (int cls : set.members()) G(cls, j) -= 1.0;
    // m (diag(p) - p p^T) dz
    const auto dz = dZ.col(j);
    dG.col(j) = m * (p.cwiseProduct(dz) - p * p.dot(dz));
  }

  const double inv_n = 1.0 / static_cast<double>(N);
  Gradient out;
  out.W = inv_n * (dG * state.H.transpose() + G * direction.H.transpose()) + 2.0 * hp.lambda_W * direction.W;
  out.H = inv_n * (direction.W.transpose() * G + state.W.transpose() * dG) + 2.0 * hp.lambda_H * direction.H;
  out.b = inv_n * dG.rowwise().sum() + 2.0 * hp.lambda_b * direction.b;
  return out;
}

}  // namespace mlnc
