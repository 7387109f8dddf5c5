#include "mlnc/random.hpp"

#include <stdexcept>

#include <Eigen/QR>

namespace mlnc {

Eigen::MatrixXd random_orthogonal(int d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("random_orthogonal: dimension must be positive");
  GaussianStream gauss(seed);
  const Eigen::MatrixXd A = gauss.matrix(d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd R = qr.matrixQR();
  for (int j = 0; j < d; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

}  // namespace mlnc
