#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "softact/energy.hh"
#include "softact/hex_mesh.hh"
#include "softact/types.hh"

namespace softact {

// Zero-rest-length drag springs on embedded surface vertices,
// E_spring = k * sum_v ||shat_v(u) - target_v||^2.
struct SpringSet {
  const EmbeddingMap* embedding = nullptr;
  double stiffness = 0.0;
  const std::vector<Vec3>* targets = nullptr;
};

// Factorization of the constant global-step matrix
// K = sum_s w_s G^T G (+ 2k W^T W for springs), free block eliminated
// against the Dirichlet columns. Reusable across actuations and u_d.
struct GlobalFactorization {
  Partition part;
  SpMat K_cc, K_cd;
  std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> solver;
  bool has_springs = false;
  double spring_stiffness = 0.0;
  const EmbeddingMap* spring_embedding = nullptr;
};

GlobalFactorization prefactor(const HexMesh& mesh, const SampleSet& samples,
                              const Partition& part,
                              const EmbeddingMap* spring_embedding = nullptr,
                              double spring_stiffness = 0.0);

// Refreshes r* = vec(polar rotation of F*A) for every sample at positions u.
void local_step(const std::vector<Vec3>& u, const HexMesh& mesh,
                const SampleSet& samples, SampleActuation& act,
                int workers = 1);

// Minimizes the r*-frozen quadratic over the free positions in place.
void global_step(const GlobalFactorization& fact, const HexMesh& mesh,
                 const SampleSet& samples, const SampleActuation& act,
                 const SpringSet* springs, std::vector<Vec3>& u);

struct SolverOptions {
  double progress_tol = 1e-6;
  int max_iterations = 300;
  int workers = 1;
};

struct SolveReport {
  int iterations = 0;
  std::vector<double> energy_trace;  // energy_trace[0] is the initial energy
  double final_relative_progress = 0.0;
  double final_force_norm = 0.0;      // l2 over free DOFs
  double final_force_inf_norm = 0.0;  // logged, not asserted
  int clamp_warnings = 0;
  double wall_seconds = 0.0;

  std::string to_json() const;
};

struct QuasiStaticState {
  std::vector<Vec3> u;       // all nodal positions, Dirichlet rows pinned
  const Partition* part = nullptr;
};

// Alternates local/global steps from u_init (Dirichlet rows of u_init are
// the prescribed values) until relative energy progress drops below
// options.progress_tol or the iteration cap is hit.
QuasiStaticState solve_quasistatic(const HexMesh& mesh,
                                   const SampleSet& samples,
                                   SampleActuation& act,
                                   const GlobalFactorization& fact,
                                   const std::vector<Vec3>& u_init,
                                   const SolverOptions& options,
                                   SolveReport* report = nullptr,
                                   const SpringSet* springs = nullptr);

double spring_energy(const SpringSet& springs, const std::vector<Vec3>& u);

}  // namespace softact
