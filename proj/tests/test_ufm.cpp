#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mlnc/errors.hpp"
#include "mlnc/ufm.hpp"
#include "support.hpp"

using namespace mlnc;
using testing_support::gaussian_state;
using testing_support::reference_hp;
using testing_support::reference_labels;

namespace {

// Direct definition: sum over labels of -(z_k - log sum exp z).
double naive_pal(const Eigen::VectorXd& z, const LabelSet& s) {
  double lse = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) lse += std::exp(z(j));
  lse = std::log(lse);
  double out = 0.0;
  for (int k : s.members()) out += lse - z(k);
  return out;
}

double naive_objective(const ModelState& st, const Dataset& data, const Hyperparams& hp) {
  double loss = 0.0;
  for (std::int64_t j = 0; j < data.size(); ++j) {
    const Eigen::VectorXd z = st.W * st.H.col(j) + st.b;
    loss += naive_pal(z, data.label_of(j));
  }
  return loss / static_cast<double>(data.size()) + hp.lambda_W * st.W.squaredNorm() +
         hp.lambda_H * st.H.squaredNorm() + hp.lambda_b * st.b.squaredNorm();
}

}  // namespace

TEST_CASE("softmax is shift invariant and rejects non-finite input") {
  Eigen::VectorXd z(4);
  z << 1.0, -2.0, 0.5, 3.0;
  const Eigen::VectorXd p = softmax(z);
  CHECK(std::abs(p.sum() - 1.0) < 1e-15);
  const Eigen::VectorXd q = softmax((z.array() + 800.0).matrix());
  CHECK((p - q).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((p.array() > 0).all());
  z(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax(z), NumericError);
}

TEST_CASE("PAL loss matches the direct formula and its gradient") {
  Eigen::VectorXd z(5);
  z << 0.3, -1.1, 2.0, 0.0, 0.7;
  const LabelSet s = LabelSet::from_members(5, {1, 2, 4});
  CHECK(std::abs(pal_ce_loss(z, s) - naive_pal(z, s)) < 1e-13);
  const Eigen::VectorXd g = pal_ce_grad(z, s);
  CHECK(std::abs(g.sum()) < 1e-14);
  const double h = 1e-6;
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd zp = z, zm = z;
    zp(k) += h;
    zm(k) -= h;
    CHECK(std::abs((naive_pal(zp, s) - naive_pal(zm, s)) / (2 * h) - g(k)) < 1e-8);
  }
}

TEST_CASE("objective at the origin is the mean label count times log K") {
  for (int K = 2; K <= 6; ++K) {
    std::vector<std::int64_t> n(static_cast<std::size_t>(K - 1), 0);
    n[0] = 3;
    if (K > 2) n[1] = 2;
    const Dataset data = generate_dataset(LabelConfig::balanced(K, n));
    double labels = 0.0;
    for (std::int64_t j = 0; j < data.size(); ++j) labels += data.multiplicity_of(j);
    const Hyperparams hp{4, 1e-2, 2e-2, 3e-3};
    const ModelState zero = ModelState::zeros(K, 4, data.size());
    CHECK(std::abs(objective(zero, data, hp) - labels / data.size() * std::log(K)) < 1e-13);
  }
}

TEST_CASE("objective and gradient match the direct definition and finite differences") {
  const Dataset data = generate_dataset(LabelConfig::per_subset(4, {{2, 1, 3, 1}, {1, 0, 2, 1, 0, 1}, {1, 1, 0, 2}}));
  const Hyperparams hp{3, 7e-3, 4e-3, 2e-3};
  const ModelState st = gaussian_state(4, 3, data.size(), 11, 0.7);
  CHECK(std::abs(objective(st, data, hp) - naive_objective(st, data, hp)) < 1e-12);

  const Evaluation ev = evaluate(st, data, hp);
  CHECK(ev.f == doctest::Approx(objective(st, data, hp)).epsilon(1e-14));
  CHECK((ev.grad - gradient(st, data, hp)).norm() < 1e-14);

  const ModelState dir = gaussian_state(4, 3, data.size(), 12);
  const double h = 1e-5;
  const double fd = (naive_objective(st + h * dir, data, hp) - naive_objective(st - h * dir, data, hp)) / (2 * h);
  CHECK(std::abs(fd - ev.grad.dot(dir)) < 1e-7 * (1 + std::abs(fd)));
}

TEST_CASE("loss split by multiplicity recombines into the data term") {
  const Dataset data = generate_dataset(reference_labels());
  const Hyperparams hp = reference_hp();
  const ModelState st = gaussian_state(3, 5, data.size(), 3);
  const auto g = loss_by_multiplicity(st, data);
  REQUIRE(g.size() == 2);
  double data_term = 0.0;
  for (const auto& [m, gm] : g)
    data_term += static_cast<double>(data.block_size(m)) / data.size() * gm;
  const double reg = hp.lambda_W * st.W.squaredNorm() + hp.lambda_H * st.H.squaredNorm() +
                     hp.lambda_b * st.b.squaredNorm();
  CHECK(std::abs(data_term + reg - objective(st, data, hp)) < 1e-12);
}

TEST_CASE("Hessian-vector products match gradient differences and are symmetric") {
  const Dataset data = generate_dataset(reference_labels());
  const Hyperparams hp = reference_hp(6);
  const ModelState st = gaussian_state(3, 6, data.size(), 5, 0.5);
  const ModelState u = gaussian_state(3, 6, data.size(), 6);
  const ModelState v = gaussian_state(3, 6, data.size(), 7);
  const ModelState Hu = hessian_vector_product(st, data, hp, u);
  const ModelState Hv = hessian_vector_product(st, data, hp, v);
  CHECK(std::abs(Hu.dot(v) - Hv.dot(u)) < 1e-11 * (1 + std::abs(Hu.dot(v))));

  const double h = 1e-5;
  const ModelState fd = (1.0 / (2 * h)) * (gradient(st + h * u, data, hp) - gradient(st - h * u, data, hp));
  CHECK((fd - Hu).norm() < 1e-6 * (1 + Hu.norm()));
}

TEST_CASE("shape checks and hyperparameter validation") {
  const Dataset data = generate_dataset(reference_labels());
  CHECK_THROWS_AS(check_shapes(ModelState::zeros(3, 4, data.size()), data, reference_hp()), std::invalid_argument);
  CHECK_THROWS_AS(check_shapes(ModelState::zeros(4, 5, data.size()), data, reference_hp()), std::invalid_argument);
  CHECK_NOTHROW(check_shapes(ModelState::zeros(3, 5, data.size()), data, reference_hp()));
  CHECK_THROWS_AS((Hyperparams{5, 0.0, 1e-3, 1e-3}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((Hyperparams{0, 1e-3, 1e-3, 1e-3}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((Hyperparams{5, 1e-3, 1e-3, -1.0}.validate()), std::invalid_argument);
}

TEST_CASE("pairwise summation is accurate and order-determined") {
  std::vector<double> v(1000, 0.1);
  CHECK(std::abs(pairwise_sum(v) - 100.0) < 1e-12);
  CHECK(pairwise_sum({}) == 0.0);
}
