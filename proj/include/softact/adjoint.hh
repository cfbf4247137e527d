#pragma once

#include <vector>

#include "softact/energy.hh"
#include "softact/hex_mesh.hh"
#include "softact/types.hh"

namespace softact {

struct AdjointReport {
  int clamp_count = 0;
  bool lu_fallback = false;
  int refinement_rounds = 0;
  double residual = 0.0;
};

// Solves H_cc * lambda = dL_du_c at the converged state. Falls back from
// LDLT to sparse LU when the Hessian is indefinite under clamped rotation
// gradients, recording a diagnostic.
VecX adjoint_solve(const GlobalSystem& system, const VecX& dL_du_c,
                   AdjointReport* report = nullptr);

// Per-sample dL/db = -lambda^T (w_s * dgrad/da, free rows) * (da/db),
// without materializing the parameter Hessian.
std::vector<Vec6> grad_actuation(const VecX& lambda, const HexMesh& mesh,
                                 const SampleSet& samples,
                                 const SampleActuation& act,
                                 const std::vector<Vec3>& u,
                                 const Partition& part, int workers = 1,
                                 int* clamp_count = nullptr);

// Implicit part of dL/du_d = -lambda^T H_cd; callers add any direct
// dependence of the loss on the Dirichlet rows.
VecX grad_dirichlet(const VecX& lambda, const GlobalSystem& system);

}  // namespace softact
