#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace nlosloc {

// Axis-aligned box, the sampling region for agent placement.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Box square(double low, double high, int dim = 2) {
    Box b;
    b.lo = Eigen::VectorXd::Constant(dim, low);
    b.hi = Eigen::VectorXd::Constant(dim, high);
    return b;
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool nondegenerate() const {
    if (lo.size() != hi.size() || lo.size() == 0) return false;
    return (hi.array() > lo.array()).all();
  }
};

// ||p - q||^2 computed as the plain sum of squared coordinate differences.
template <typename DerivedA, typename DerivedB>
double squared_distance(const Eigen::MatrixBase<DerivedA>& p,
                        const Eigen::MatrixBase<DerivedB>& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("squared_distance: dimension mismatch");
  }
  double s = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const double d = p(c) - q(c);
    s += d * d;
  }
  return s;
}

}  // namespace nlosloc
