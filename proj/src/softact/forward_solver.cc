#include "softact/forward_solver.hh"

#include <chrono>
#include <cmath>

#include "json.hpp"
#include "softact/parallel.hh"

namespace softact {

GlobalFactorization prefactor(const HexMesh& mesh, const SampleSet& samples,
                              const Partition& part,
                              const EmbeddingMap* spring_embedding,
                              double spring_stiffness) {
  GlobalFactorization fact;
  fact.part = part;

  std::vector<Triplet> cc, cd;
  for (const Sample& sm : samples.samples) {
    const Mat24 K = sm.weight * (sm.G.transpose() * sm.G).eval();
    const auto& elem = mesh.elements[sm.element];
    for (int a = 0; a < 8; ++a) {
      const int fa = part.free_slot[elem[a]];
      if (fa < 0) continue;
      for (int b = 0; b < 8; ++b) {
        const int fb = part.free_slot[elem[b]];
        const int db = part.dirichlet_slot[elem[b]];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            const double v = K(3 * a + r, 3 * b + c);
            if (fb >= 0)
              cc.emplace_back(3 * fa + r, 3 * fb + c, v);
            else
              cd.emplace_back(3 * fa + r, 3 * db + c, v);
          }
      }
    }
  }

  if (spring_embedding && spring_stiffness > 0) {
    fact.has_springs = true;
    fact.spring_stiffness = spring_stiffness;
    fact.spring_embedding = spring_embedding;
    const double two_k = 2.0 * spring_stiffness;
    for (int v = 0; v < spring_embedding->size(); ++v) {
      const auto& nodes = spring_embedding->nodes[v];
      const Vec8& w = spring_embedding->weights[v];
      for (int a = 0; a < 8; ++a) {
        const int fa = part.free_slot[nodes[a]];
        if (fa < 0) continue;
        for (int b = 0; b < 8; ++b) {
          const int fb = part.free_slot[nodes[b]];
          const int db = part.dirichlet_slot[nodes[b]];
          const double val = two_k * w(a) * w(b);
          for (int r = 0; r < 3; ++r) {
            if (fb >= 0)
              cc.emplace_back(3 * fa + r, 3 * fb + r, val);
            else
              cd.emplace_back(3 * fa + r, 3 * db + r, val);
          }
        }
      }
    }
  }

  fact.K_cc.resize(3 * part.num_free(), 3 * part.num_free());
  fact.K_cd.resize(3 * part.num_free(), 3 * part.num_dirichlet());
  fact.K_cc.setFromTriplets(cc.begin(), cc.end());
  fact.K_cd.setFromTriplets(cd.begin(), cd.end());

  fact.solver = std::make_unique<Eigen::SimplicialLDLT<SpMat>>();
  fact.solver->compute(fact.K_cc);
  if (fact.solver->info() != Eigen::Success)
    throw NumericError(
        "global-step matrix factorization failed; the free region is likely "
        "disconnected from every Dirichlet node and spring");
  return fact;
}

void local_step(const std::vector<Vec3>& u, const HexMesh& mesh,
                const SampleSet& samples, SampleActuation& act, int workers) {
  const int n = samples.size();
  if (act.size() != n)
    throw ConfigError("actuation count does not match sample count");
  std::vector<int> bad_det(num_chunks(n), -1);
  for_each_chunk(n, workers, [&](int chunk, int begin, int end) {
    for (int s = begin; s < end; ++s) {
      if (act.A[s].determinant() <= 0.0) {
        bad_det[chunk] = s;
        return;
      }
      const Sample& sm = samples.samples[s];
      const Mat3 F = unvec(sm.G * mesh.gather(sm.element, u));
      act.rstar[s] = vec(polar_decompose(F * act.A[s]).R);
    }
  });
  for (int s : bad_det)
    if (s >= 0)
      throw NumericError("actuation determinant is non-positive at sample " +
                         std::to_string(s) + " (det = " +
                         std::to_string(act.A[s].determinant()) + ")");
  act.rstar_fresh = true;
}

double spring_energy(const SpringSet& springs, const std::vector<Vec3>& u) {
  const auto shat = springs.embedding->apply(u);
  double e = 0.0;
  for (size_t v = 0; v < shat.size(); ++v)
    e += (shat[v] - (*springs.targets)[v]).squaredNorm();
  return springs.stiffness * e;
}

void global_step(const GlobalFactorization& fact, const HexMesh& mesh,
                 const SampleSet& samples, const SampleActuation& act,
                 const SpringSet* springs, std::vector<Vec3>& u) {
  if (!act.rstar_fresh)
    throw NumericError("stale rotation cache: run local_step before global_step");
  const Partition& part = fact.part;

  VecX rhs_full = VecX::Zero(3 * static_cast<int>(u.size()));
  for (int s = 0; s < samples.size(); ++s) {
    const Sample& sm = samples.samples[s];
    const Vec24 g =
        sm.weight * (sm.G.transpose() * (hat_sym(act.A[s]) * act.rstar[s]));
    const auto& elem = mesh.elements[sm.element];
    for (int a = 0; a < 8; ++a)
      rhs_full.segment<3>(3 * elem[a]) += g.segment<3>(3 * a);
  }
  if (springs && springs->embedding) {
    const double two_k = 2.0 * springs->stiffness;
    for (int v = 0; v < springs->embedding->size(); ++v) {
      const auto& nodes = springs->embedding->nodes[v];
      const Vec8& w = springs->embedding->weights[v];
      for (int a = 0; a < 8; ++a)
        rhs_full.segment<3>(3 * nodes[a]) += two_k * w(a) * (*springs->targets)[v];
    }
  }

  VecX rhs = VecX(3 * part.num_free());
  for (int s = 0; s < part.num_free(); ++s)
    rhs.segment<3>(3 * s) = rhs_full.segment<3>(3 * part.free_nodes[s]);
  if (part.num_dirichlet() > 0)
    rhs -= fact.K_cd * gather_dirichlet(part, u);
  if (!rhs.allFinite()) throw NumericError("non-finite global-step right-hand side");

  const VecX uc = fact.solver->solve(rhs);
  if (fact.solver->info() != Eigen::Success)
    throw NumericError("global-step solve failed");
  scatter_free(part, uc, u);
}

QuasiStaticState solve_quasistatic(const HexMesh& mesh,
                                   const SampleSet& samples,
                                   SampleActuation& act,
                                   const GlobalFactorization& fact,
                                   const std::vector<Vec3>& u_init,
                                   const SolverOptions& options,
                                   SolveReport* report,
                                   const SpringSet* springs) {
  const auto t0 = std::chrono::steady_clock::now();
  QuasiStaticState state;
  state.u = u_init;
  state.part = &fact.part;

  auto total_energy = [&]() {
    double e = assemble(mesh, samples, act, state.u, fact.part,
                        /*with_hessian=*/false, options.workers)
                   .energy;
    if (springs && springs->embedding) e += spring_energy(*springs, state.u);
    return e;
  };

  SolveReport rep;
  local_step(state.u, mesh, samples, act, options.workers);
  rep.energy_trace.push_back(total_energy());

  for (int k = 0; k < options.max_iterations; ++k) {
    global_step(fact, mesh, samples, act, springs, state.u);
    local_step(state.u, mesh, samples, act, options.workers);
    const double e_prev = rep.energy_trace.back();
    const double e = total_energy();
    rep.energy_trace.push_back(e);
    ++rep.iterations;
    if (e > e_prev + 1e-12)
      throw NumericError("energy increased during quasi-static solve: " +
                         std::to_string(e_prev) + " -> " + std::to_string(e));
    rep.final_relative_progress = (e_prev - e) / std::max(e_prev, 1e-12);
    if (rep.final_relative_progress < options.progress_tol) break;
  }

  const GlobalSystem sys = assemble(mesh, samples, act, state.u, fact.part,
                                    /*with_hessian=*/false, options.workers);
  VecX force_free(3 * fact.part.num_free());
  for (int s = 0; s < fact.part.num_free(); ++s)
    force_free.segment<3>(3 * s) =
        sys.force.segment<3>(3 * fact.part.free_nodes[s]);
  if (springs && springs->embedding) {
    const auto shat = springs->embedding->apply(state.u);
    for (int v = 0; v < springs->embedding->size(); ++v) {
      const Vec3 g =
          2.0 * springs->stiffness * (shat[v] - (*springs->targets)[v]);
      const auto& nodes = springs->embedding->nodes[v];
      const Vec8& w = springs->embedding->weights[v];
      for (int a = 0; a < 8; ++a) {
        const int fa = fact.part.free_slot[nodes[a]];
        if (fa >= 0) force_free.segment<3>(3 * fa) += w(a) * g;
      }
    }
  }
  rep.final_force_norm = force_free.norm();
  rep.final_force_inf_norm =
      force_free.size() ? force_free.cwiseAbs().maxCoeff() : 0.0;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (report) *report = rep;
  return state;
}

std::string SolveReport::to_json() const {
  nlohmann::json j;
  j["iterations"] = iterations;
  j["energy_trace"] = energy_trace;
  j["final_relative_progress"] = final_relative_progress;
  j["final_force_norm"] = final_force_norm;
  j["final_force_inf_norm"] = final_force_inf_norm;
  j["clamp_warnings"] = clamp_warnings;
  j["wall_seconds"] = wall_seconds;
  return j.dump(1);
}

}  // namespace softact
