#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>

namespace exmap {

/// Eigendecomposition S = R diag(lambda) R^T of a symmetric 2x2 matrix.
/// lambda is sorted descending and R is a proper rotation (det +1) whose first
/// column is the leading eigenvector.
struct Sym2Eigen {
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  std::array<double, 2> lambda{0.0, 0.0};
};

inline Sym2Eigen eigen_sym2(const Eigen::Matrix2d& s) {
  const double a = s(0, 0);
  const double b = 0.5 * (s(0, 1) + s(1, 0));
  const double c = s(1, 1);

  Sym2Eigen out;
  if (b == 0.0) {
    if (a >= c) {
      out.lambda = {a, c};
    } else {
      out.lambda = {c, a};
      out.rotation << 0.0, -1.0, 1.0, 0.0;
    }
    return out;
  }

  const double mean = 0.5 * (a + c);
  const double radius = std::hypot(0.5 * (a - c), b);
  const double l1 = mean + radius;
  // product form avoids cancellation in the smaller root
  const double l2 = l1 != 0.0 ? (a * c - b * b) / l1 : mean - radius;
  out.lambda = {l1, l2};

  // pick the better conditioned of the two candidate eigenvectors
  double vx, vy;
  if (std::abs(a - l1) > std::abs(c - l1)) {
    vx = b;
    vy = l1 - a;
  } else {
    vx = l1 - c;
    vy = b;
  }
  const double n = std::hypot(vx, vy);
  vx /= n;
  vy /= n;
  out.rotation << vx, -vy, vy, vx;
  return out;
}

}  // namespace exmap
