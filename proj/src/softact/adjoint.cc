#include "softact/adjoint.hh"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "softact/parallel.hh"

namespace softact {

VecX adjoint_solve(const GlobalSystem& system, const VecX& dL_du_c,
                   AdjointReport* report) {
  if (!system.has_hessian)
    throw ConfigError("adjoint solve requires a system assembled with Hessian");
  AdjointReport rep;
  rep.clamp_count = system.clamp_count;

  const double rhs_norm = std::max(dL_du_c.norm(), 1e-300);
  auto residual_of = [&](const VecX& x) {
    return (system.H_cc * x - dL_du_c).norm() / rhs_norm;
  };

  VecX lambda;
  Eigen::SimplicialLDLT<SpMat> ldlt(system.H_cc);
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    lambda = ldlt.solve(dL_du_c);
    ok = ldlt.info() == Eigen::Success && lambda.allFinite();
    while (ok && residual_of(lambda) > 1e-10 && rep.refinement_rounds < 3) {
      lambda += ldlt.solve(dL_du_c - system.H_cc * lambda);
      ++rep.refinement_rounds;
    }
  }
  if (!ok || residual_of(lambda) > 1e-8) {
    rep.lu_fallback = true;
    Eigen::SparseLU<SpMat> lu;
    SpMat H = system.H_cc;
    H.makeCompressed();
    lu.compute(H);
    if (lu.info() != Eigen::Success)
      throw NumericError(
          "adjoint Hessian factorization failed at the converged state; "
          "inspect rotation-gradient denominator clamps (count = " +
          std::to_string(system.clamp_count) + ")");
    lambda = lu.solve(dL_du_c);
    if (lu.info() != Eigen::Success || !lambda.allFinite() ||
        residual_of(lambda) > 1e-8)
      throw NumericError(
          "adjoint solve residual too large at the converged state; "
          "inspect rotation-gradient denominator clamps (count = " +
          std::to_string(system.clamp_count) + ")");
  }
  rep.residual = residual_of(lambda);
  if (report) *report = rep;
  return lambda;
}

std::vector<Vec6> grad_actuation(const VecX& lambda, const HexMesh& mesh,
                                 const SampleSet& samples,
                                 const SampleActuation& act,
                                 const std::vector<Vec3>& u,
                                 const Partition& part, int workers,
                                 int* clamp_count) {
  if (!act.rstar_fresh)
    throw NumericError("stale rotation cache in grad_actuation");
  const int n = samples.size();
  std::vector<Vec6> out(n);
  std::vector<int> clamps(num_chunks(n), 0);
  for_each_chunk(n, workers, [&](int chunk, int begin, int end) {
    for (int s = begin; s < end; ++s) {
      const Sample& sm = samples.samples[s];
      const Vec24 u_e = mesh.gather(sm.element, u);
      const Mat3 F = unvec(sm.G * u_e);
      const PolarFactors f = polar_decompose(F * act.A[s]);
      const Mat24x6 Hb =
          sm.weight * sample_hessian_b(sm.G, act.A[s], F, f, &clamps[chunk]);
      Vec24 lam_e = Vec24::Zero();
      const auto& elem = mesh.elements[sm.element];
      for (int a = 0; a < 8; ++a) {
        const int fa = part.free_slot[elem[a]];
        if (fa >= 0) lam_e.segment<3>(3 * a) = lambda.segment<3>(3 * fa);
      }
      out[s] = -(Hb.transpose() * lam_e);
    }
  });
  if (clamp_count)
    for (int c : clamps) *clamp_count += c;
  return out;
}

VecX grad_dirichlet(const VecX& lambda, const GlobalSystem& system) {
  if (!system.has_hessian)
    throw ConfigError("grad_dirichlet requires a system assembled with Hessian");
  return -(system.H_cd.transpose() * lambda);
}

}  // namespace softact
