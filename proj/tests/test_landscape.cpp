#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "mlnc/landscape.hpp"
#include "mlnc/random.hpp"
#include "support.hpp"

using namespace mlnc;
using testing_support::gaussian_state;
using testing_support::reference_labels;

namespace {

Eigen::VectorXd flatten(const ModelState& s) {
  Eigen::VectorXd v(s.W.size() + s.H.size() + s.b.size());
  v << Eigen::Map<const Eigen::VectorXd>(s.W.data(), s.W.size()),
      Eigen::Map<const Eigen::VectorXd>(s.H.data(), s.H.size()), s.b;
  return v;
}

ModelState unflatten(const Eigen::VectorXd& v, const ModelState& like) {
  ModelState s = ModelState::zeros_like(like);
  Eigen::Index at = 0;
  for (Eigen::Index j = 0; j < s.W.size(); ++j) s.W.data()[j] = v(at++);
  for (Eigen::Index j = 0; j < s.H.size(); ++j) s.H.data()[j] = v(at++);
  for (Eigen::Index j = 0; j < s.b.size(); ++j) s.b(j) = v(at++);
  return s;
}

Eigen::MatrixXd dense_hessian(const ModelState& st, const Dataset& data, const Hyperparams& hp) {
  const Eigen::Index n = flatten(st).size();
  Eigen::MatrixXd Hm(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const ModelState e = unflatten(Eigen::VectorXd::Unit(n, j), st);
    Hm.col(j) = flatten(hessian_vector_product(st, data, hp, e));
  }
  return Hm;
}

// Gradient of the mean loss in the logits at Z = 0: (|S| / K) 1 - 1_S per column, over N.
Eigen::MatrixXd origin_logit_gradient(const Dataset& data) {
  const int K = data.K();
  Eigen::MatrixXd G(K, data.size());
  for (std::int64_t j = 0; j < data.size(); ++j) {
    const LabelSet& s = data.label_of(j);
    for (int k = 0; k < K; ++k) G(k, j) = double(s.multiplicity()) / K - (s.contains(k) ? 1.0 : 0.0);
  }
  return G / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("Hessian-vector products assemble into a symmetric matrix") {
  const Dataset data = generate_dataset(LabelConfig::balanced(3, {2, 1}));
  const Hyperparams hp{4, 5e-3, 2e-3, 1e-3};
  const ModelState st = gaussian_state(3, 4, data.size(), 8, 0.4);
  const Eigen::MatrixXd Hm = dense_hessian(st, data, hp);
  CHECK((Hm - Hm.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const HvpCheck chk = hvp_self_check(st, data, hp);
  CHECK(chk.passed);
  CHECK(chk.symmetry < 1e-10);
}

TEST_CASE("the origin's smallest eigenvalue matches its closed form and a dense solve") {
  const Dataset data = generate_dataset(LabelConfig::balanced(3, {2, 1}));
  const Hyperparams hp{5, 5e-3, 2e-3, 1e-3};
  const ModelState origin = ModelState::zeros(3, 5, data.size());
  const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(origin_logit_gradient(data)).singularValues()(0);
  const double closed = hp.lambda_W + hp.lambda_H - std::sqrt(std::pow(hp.lambda_W - hp.lambda_H, 2) + s * s);

  const Eigen::VectorXd eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense_hessian(origin, data, hp)).eigenvalues();
  CHECK(std::abs(eig(0) - closed) < 1e-12);

  const EigenEstimate est = min_eigenvalue(origin, data, hp);
  CHECK(est.converged);
  CHECK(std::abs(est.lambda - closed) < 1e-7);
  CHECK(std::abs(est.lambda_max - eig(eig.size() - 1)) < 1e-6 * std::abs(eig(eig.size() - 1)));
  CHECK(std::abs(est.direction.norm() - 1.0) < 1e-12);
}

TEST_CASE("min eigenvalue at a random point agrees with a dense solve") {
  const Dataset data = generate_dataset(LabelConfig::balanced(3, {1, 1}));
  const Hyperparams hp{4, 5e-3, 5e-3, 1e-3};
  const ModelState st = gaussian_state(3, 4, data.size(), 3, 0.8);
  const Eigen::VectorXd eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense_hessian(st, data, hp)).eigenvalues();
  const EigenEstimate est = min_eigenvalue(st, data, hp, 200000, 1e-9);
  CHECK(est.converged);
  CHECK(std::abs(est.lambda - eig(0)) < 1e-6);
}

TEST_CASE("curvature probe classes") {
  const LabelConfig cfg = reference_labels();
  const Hyperparams hp = testing_support::reference_hp(6);
  const Dataset data = generate_dataset(cfg);

  const CurvatureReport origin = probe(ModelState::zeros(3, 6, data.size()), data, hp);
  CHECK(origin.is_critical);
  CHECK(origin.classification == CurvatureClass::strict_saddle);
  CHECK(origin.lambda_min_estimate < 0.0);
  CHECK(origin.hvp.passed);

  const ModelState global = construct_global(data, hp, optimal_rho(cfg, hp), 1);
  const CurvatureReport at_min = probe(global, data, hp);
  CHECK(at_min.classification == CurvatureClass::approx_global_minimum);
  CHECK(at_min.lambda_min_estimate > -at_min.curvature_margin);
  // flat directions come from rotations of the 6-dim feature space fixing the 2-dim ETF span
  CHECK(at_min.near_zero_directions == 15 - 6);

  const CurvatureReport random = probe(gaussian_state(3, 6, data.size(), 2), data, hp);
  CHECK_FALSE(random.is_critical);
  CHECK(random.classification == CurvatureClass::inconclusive);

  CHECK(to_string(CurvatureClass::strict_saddle) == "strict-saddle");
}

TEST_CASE("rotating the feature space is a flat direction at the global minimum") {
  const LabelConfig cfg = reference_labels();
  const Hyperparams hp = testing_support::reference_hp(6);
  const Dataset data = generate_dataset(cfg);
  const ModelState st = construct_global(data, hp, optimal_rho(cfg, hp), 4);
  GaussianStream g(31);
  const Eigen::MatrixXd R = g.matrix(6, 6);
  const Eigen::MatrixXd A = R - R.transpose();
  ModelState v = ModelState::zeros_like(st);
  v.W = -st.W * A;
  v.H = A * st.H;
  const double curvature = v.dot(hessian_vector_product(st, data, hp, v)) / v.squared_norm();
  CHECK(std::abs(curvature) < 1e-8);
  // while a generic direction has clearly positive curvature
  const ModelState u = gaussian_state(3, 6, data.size(), 6);
  CHECK(u.dot(hessian_vector_product(st, data, hp, u)) / u.squared_norm() > 1e-4);
}

TEST_CASE("escaping the origin along negative curvature reaches the global minimum") {
  const LabelConfig cfg = reference_labels();
  const Hyperparams hp = testing_support::reference_hp(6);
  const Dataset data = generate_dataset(cfg);
  const ModelState origin = ModelState::zeros(3, 6, data.size());
  const CurvatureReport pr = probe(origin, data, hp);
  TrainConfig tc;
  tc.record_metrics = false;
  const EscapeReport esc = escape_test(origin, data, hp, pr, tc, VerifyTolerances::uniform(1e-3));
  CHECK(esc.both_decrease);
  CHECK(esc.f_plus < esc.f_saddle);
  CHECK(esc.f_minus < esc.f_saddle);
  CHECK(esc.descended);
  CHECK_FALSE(esc.diverged);
  CHECK(esc.verification.passed());
  CHECK(std::abs(esc.f_final - global_objective(data, hp)) < 1e-9);

  const CurvatureReport not_saddle = probe(construct_global(data, hp, optimal_rho(cfg, hp)), data, hp);
  CHECK_THROWS_AS(escape_test(origin, data, hp, not_saddle, tc, VerifyTolerances{}), std::invalid_argument);
}

TEST_CASE("the probe refuses feature dimensions up to K") {
  const Dataset data = generate_dataset(reference_labels());
  for (int d : {2, 3}) {
    const Hyperparams hp = testing_support::reference_hp(d);
    CHECK_THROWS_AS(probe(ModelState::zeros(3, d, data.size()), data, hp), std::invalid_argument);
  }
}
