#include "mlnc/lemmas.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mlnc/labelspace.hpp"
#include "mlnc/random.hpp"
#include "mlnc/theory.hpp"
#include "mlnc/ufm.hpp"

namespace mlnc {

namespace {

constexpr double kPascalTol = 1e-10;
constexpr double kTightTol = 1e-12;

// gamma <1 - (K/m) 1_S, z> + c2, the linear minorant of the PAL loss.
double linear_bound(int K, const LabelSet& set, const Eigen::VectorXd& z, double c) {
  const int m = set.multiplicity();
  double inner = z.sum();
  for (int k : set.members()) inner -= (static_cast<double>(K) / m) * z(k);
  return gamma1m(K, m, c) * inner + c2m(K, m, c);
}

double pascal_residual(int K, int m, GaussianStream& gauss) {
  const int d = K + 1;
  const std::int64_t n = 2;
  const std::int64_t cb = binomial(K, m);
  Eigen::MatrixXd Hm(d, cb * n);
  for (std::int64_t i = 0; i < n; ++i) {
    Eigen::MatrixXd U = gauss.matrix(d, K);
    U.colwise() -= U.rowwise().mean();
    for (std::int64_t k = 0; k < cb; ++k) {
      const LabelSet set = lex_subset(K, m, k);
      Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
      for (int l : set.members()) h += U.col(l);
      Hm.col(k * n + i) = h;
    }
  }
  return pascal_norm_check(Hm, K, m);
}

}  // namespace

bool LemmaReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const LemmaRow& r) { return r.passed; });
}

LemmaReport run_lemma_suite(int max_k, std::int64_t draws, std::uint64_t seed) {
  if (max_k < 2) throw std::invalid_argument("lemma suite: max_k must be at least 2");
  if (draws < 0) throw std::invalid_argument("lemma suite: draws must be nonnegative");
  LemmaReport rep;
  GaussianStream gauss(seed);

  for (int K = 2; K <= max_k; ++K) {
    for (int m = 1; m < K; ++m) {
      const GramCheck gram = check_gram_identities(K, m);
      rep.rows.push_back({"gram", K, m, gram.all() ? 0.0 : 1.0, gram.all()});
      const MoorePenroseCheck mp = check_moore_penrose(K, m);
      rep.rows.push_back({"moore_penrose", K, m, boost::rational_cast<double>(mp.identity_residual), mp.all()});
      const double pascal = pascal_residual(K, m, gauss);
      rep.rows.push_back({"pascal_norm", K, m, pascal, pascal < kPascalTol});

      double worst = 0.0;
      for (double c : std::array{0.05, 0.5, 1.0, 3.0, 10.0}) {
        const double gap = std::log((K - m) * c / m);
        Eigen::VectorXd z = Eigen::VectorXd::Constant(K, -static_cast<double>(m) * gap / K);
        const LabelSet set = lex_subset(K, m, binomial(K, m) - 1);
        for (int k : set.members()) z(k) = static_cast<double>(K - m) * gap / K;
        worst = std::max(worst, std::abs(pal_ce_loss(z, set) - linear_bound(K, set, z, c)));
      }
      rep.rows.push_back({"linear_bound_tight", K, m, worst, worst < kTightTol});
    }
  }

  double violation = 0.0;
  for (std::int64_t t = 0; t < draws; ++t) {
    const int K = 2 + static_cast<int>(gauss.uniform() * (max_k - 1));
    const int m = 1 + static_cast<int>(gauss.uniform() * (K - 1));
    const auto rank = static_cast<std::int64_t>(gauss.uniform() * static_cast<double>(binomial(K, m)));
    const LabelSet set = lex_subset(K, m, rank);
    Eigen::VectorXd z(K);
    for (int k = 0; k < K; ++k) z(k) = -5.0 + 10.0 * gauss.uniform();
    const double c = 10.0 * (1.0 - gauss.uniform());
    const double loss = pal_ce_loss(z, set);
    violation = std::max(violation, (linear_bound(K, set, z, c) - loss) / (1.0 + std::abs(loss)));
  }
  rep.draws = draws;
  rep.rows.push_back({"linear_bound_draws", 0, 0, std::max(violation, 0.0), violation <= kTightTol});

  const double log2_gap = std::abs(c2m(2, 1, 1.0) - std::numbers::ln2);
  rep.rows.push_back({"c2_log2", 2, 1, log2_gap, log2_gap < kTightTol});
  return rep;
}

}  // namespace mlnc
