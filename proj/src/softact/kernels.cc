#include "softact/kernels.hh"

#include <cmath>

namespace softact {

Vec9 vec(const Mat3& m) {
  Vec9 v;
  v << m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1),
      m(2, 2);
  return v;
}

Mat3 unvec(const Vec9& v) {
  Mat3 m;
  m << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  return m;
}

Mat9 hat_sym(const Mat3& a) {
  Mat9 h = Mat9::Zero();
  for (int i = 0; i < 3; ++i) h.block<3, 3>(3 * i, 3 * i) = a;
  return h;
}

Mat9 hat_row(const Mat3& m) {
  // (M kron I3): entry (3i+a, 3k+a) = M(i,k).
  Mat9 h = Mat9::Zero();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int a = 0; a < 3; ++a) h(3 * i + a, 3 * k + a) = m(i, k);
  return h;
}

Mat3 actuation_from_params(const ActuationParams& p) {
  const Vec6& b = p.b;
  Mat3 a;
  a << 1.0 + b(0), b(1), b(2),  //
      b(1), 1.0 + b(3), b(4),   //
      b(2), b(4), 1.0 + b(5);
  return a;
}

const Mat9x6& actuation_param_jacobian() {
  static const Mat9x6 j = [] {
    Mat9x6 m = Mat9x6::Zero();
    // vec(A) = (1+b0, b1, b2, b1, 1+b3, b4, b2, b4, 1+b5)
    m(0, 0) = 1;
    m(1, 1) = 1;
    m(2, 2) = 1;
    m(3, 1) = 1;
    m(4, 3) = 1;
    m(5, 4) = 1;
    m(6, 2) = 1;
    m(7, 4) = 1;
    m(8, 5) = 1;
    return m;
  }();
  return j;
}

PolarFactors polar_decompose(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  PolarFactors f;
  f.U = svd.matrixU();
  f.V = svd.matrixV();
  f.sigma = svd.singularValues();
  if ((f.U * f.V.transpose()).determinant() < 0) {
    f.U.col(2) = -f.U.col(2);
    f.sigma(2) = -f.sigma(2);
  }
  f.R = f.U * f.V.transpose();
  f.S = f.V * f.sigma.asDiagonal() * f.V.transpose();
  return f;
}

RotationGradient rotation_gradient(const PolarFactors& f) {
  static const Mat3 spin[3] = {
      (Mat3() << 0, -1, 0, 1, 0, 0, 0, 0, 0).finished(),
      (Mat3() << 0, 0, 0, 0, 0, 1, 0, -1, 0).finished(),
      (Mat3() << 0, 0, 1, 0, 0, 0, -1, 0, 0).finished()};
  const double sx = f.sigma(0), sy = f.sigma(1), sz = f.sigma(2);
  const double denom[3] = {sx + sy, sy + sz, sx + sz};
  const double eps_denom = 1e-6 * std::max(1.0, sx);

  RotationGradient g;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < 3; ++i) {
    double d = denom[i];
    if (d < eps_denom) {
      d = eps_denom;
      ++g.clamped;
    }
    g.lambda[i] = 2.0 / d;
    g.q[i] = vec(inv_sqrt2 * f.U * spin[i] * f.V.transpose());
    g.H += g.lambda[i] * (g.q[i] * g.q[i].transpose());
  }
  return g;
}

}  // namespace softact
