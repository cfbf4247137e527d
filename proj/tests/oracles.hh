#pragma once

// Independent numeric oracles for the test suite: finite differences,
// dense re-solves, winding numbers, polygon clipping. These deliberately
// avoid calling the library code they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "softact/types.hh"

namespace oracles {

using softact::Mat3;
using softact::MatX;
using softact::Vec3;
using softact::VecX;

inline VecX fd_grad(const std::function<double(const VecX&)>& f, const VecX& x,
                    double h) {
  VecX g(x.size());
  VecX xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    double fp = f(xp);
    xp(i) = x(i) - h;
    double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline MatX fd_jacobian(const std::function<VecX(const VecX&)>& f,
                        const VecX& x, double h) {
  VecX f0 = f(x);
  MatX j(f0.size(), x.size());
  VecX xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    VecX fp = f(xp);
    xp(i) = x(i) - h;
    VecX fm = f(xp);
    xp(i) = x(i);
    j.col(i) = (fp - fm) / (2.0 * h);
  }
  return j;
}

inline double rel_err(const MatX& got, const MatX& want) {
  double denom = std::max(want.norm(), 1e-12);
  return (got - want).norm() / denom;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
  return q.normalized().toRotationMatrix();
}

// Random matrix with singular values in [smin, smax].
inline Mat3 random_conditioned(std::mt19937_64& rng, double smin,
                               double smax) {
  std::uniform_real_distribution<double> ud(smin, smax);
  Vec3 s(ud(rng), ud(rng), ud(rng));
  return random_rotation(rng) * s.asDiagonal() * random_rotation(rng);
}

// Generalized winding number via Van Oosterom-Strackee solid angles.
// ~4*pi inside a closed surface, ~0 outside.
inline double winding_number(const std::vector<Vec3>& verts,
                             const std::vector<std::array<int, 3>>& faces,
                             const Vec3& p) {
  double total = 0.0;
  for (const auto& f : faces) {
    Vec3 a = verts[f[0]] - p, b = verts[f[1]] - p, c = verts[f[2]] - p;
    double la = a.norm(), lb = b.norm(), lc = c.norm();
    double num = a.dot(b.cross(c));
    double den =
        la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total;
}

inline bool winding_inside(const std::vector<Vec3>& verts,
                           const std::vector<std::array<int, 3>>& faces,
                           const Vec3& p) {
  return std::abs(winding_number(verts, faces, p)) > 2.0 * M_PI;
}

// Triangle / axis-aligned box intersection by Sutherland-Hodgman clipping
// of the triangle against the box half-spaces; nonempty output means the
// closed shapes intersect.
inline bool clip_overlap(const Vec3& lo, const Vec3& hi, const Vec3& a,
                         const Vec3& b, const Vec3& c) {
  std::vector<Vec3> poly{a, b, c};
  auto clip = [&poly](int axis, double bound, int side) {
    std::vector<Vec3> out;
    int n = static_cast<int>(poly.size());
    for (int i = 0; i < n; ++i) {
      const Vec3& p = poly[i];
      const Vec3& q = poly[(i + 1) % n];
      double dp = side * (p(axis) - bound);
      double dq = side * (q(axis) - bound);
      if (dp <= 0) out.push_back(p);
      if ((dp < 0 && dq > 0) || (dp > 0 && dq < 0)) {
        double t = dp / (dp - dq);
        out.push_back(p + t * (q - p));
      }
    }
    poly = out;
  };
  for (int axis = 0; axis < 3 && !poly.empty(); ++axis) {
    clip(axis, lo(axis), -1);
    if (poly.empty()) break;
    clip(axis, hi(axis), +1);
  }
  return !poly.empty();
}

}  // namespace oracles
