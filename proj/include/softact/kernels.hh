#pragma once

#include "softact/types.hh"

namespace softact {

// Row-wise flattening of a 3x3 matrix:
// vec(M) = (M00, M01, M02, M10, M11, M12, M20, M21, M22).
Vec9 vec(const Mat3& m);
Mat3 unvec(const Vec9& v);

// Block-diagonal expansion diag(A, A, A).
// For symmetric A: hat_sym(A) * vec(M) = vec(M A).
Mat9 hat_sym(const Mat3& a);

// Left-factor expansion (M kron I3).
// For any M, A: hat_row(M) * vec(A) = vec(M A).
// Serves as both the F-hat and R-hat expansion.
Mat9 hat_row(const Mat3& m);

// Strain-like actuation offsets. A(b) = I + sym(b), see actuation_from_params.
struct ActuationParams {
  Vec6 b = Vec6::Zero();
};

// A = [[1+b0, b1,   b2  ],
//      [b1,   1+b3, b4  ],
//      [b2,   b4,   1+b5]]
// (b is 0-indexed here; symmetric by construction, det not checked.)
Mat3 actuation_from_params(const ActuationParams& p);

// Constant sparse 9x6 Jacobian d vec(A) / d b.
const Mat9x6& actuation_param_jacobian();

struct PolarFactors {
  Mat3 R;      // rotation, det +1
  Mat3 S;      // symmetric factor, M = R * S
  Mat3 U, V;   // SVD factors after the reflection fix
  Vec3 sigma;  // singular values, descending; sigma(2) may be negative
};

// Polar decomposition via SVD. If det(U V^T) = -1 the column of U paired
// with the smallest singular value is negated together with sigma(2), so
// R is always a proper rotation. Rank-deficient input still yields a valid
// rotation (tie broken by SVD ordering).
PolarFactors polar_decompose(const Mat3& m);

struct RotationGradient {
  Mat9 H = Mat9::Zero();  // sum_i lambda_i q_i q_i^T, symmetric
  double lambda[3] = {0, 0, 0};
  Vec9 q[3];
  int clamped = 0;  // denominators clamped to eps_denom
};

// Rotation gradient d vec(R) / d vec(M) of the polar rotation, from the
// closed-form rank-3 eigenstructure:
//   lambda0 = 2/(sx+sy), lambda1 = 2/(sy+sz), lambda2 = 2/(sx+sz),
//   Q0 = (1/sqrt2) U [[0,-1,0],[1,0,0],[0,0,0]] V^T  (and cyclic variants).
// Pair sums below eps_denom = 1e-6 * max(1, sx) are clamped, never fatal.
RotationGradient rotation_gradient(const PolarFactors& f);

}  // namespace softact
