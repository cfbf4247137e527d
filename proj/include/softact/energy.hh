#pragma once

#include <vector>

#include "softact/hex_mesh.hh"
#include "softact/kernels.hh"
#include "softact/types.hh"

namespace softact {

// Free/Dirichlet split of the nodal DOFs. DOF id = 3*slot + axis within
// each group, slots in ascending node order.
struct Partition {
  std::vector<int> free_nodes;
  std::vector<int> dirichlet_nodes;
  std::vector<int> free_slot;       // per node, -1 if Dirichlet
  std::vector<int> dirichlet_slot;  // per node, -1 if free

  static Partition from_tags(const HexMesh& mesh);
  static Partition all_free(int num_nodes);

  int num_free() const { return static_cast<int>(free_nodes.size()); }
  int num_dirichlet() const { return static_cast<int>(dirichlet_nodes.size()); }
  bool is_free(int node) const { return free_slot[node] >= 0; }
};

VecX gather_free(const Partition& part, const std::vector<Vec3>& u);
VecX gather_dirichlet(const Partition& part, const std::vector<Vec3>& u);
void scatter_free(const Partition& part, const VecX& uc, std::vector<Vec3>& u);
void scatter_dirichlet(const Partition& part, const VecX& ud,
                       std::vector<Vec3>& u);

// Per-sample actuation state. r* caches vec(R) of the polar rotation of F*A
// at the positions last passed to local_step; reading a stale cache throws.
struct SampleActuation {
  std::vector<Vec6> b;
  std::vector<Mat3> A;
  std::vector<Vec9> rstar;
  bool rstar_fresh = false;

  void resize(int n);
  void set_b(int i, const Vec6& params);
  int size() const { return static_cast<int>(b.size()); }
};

struct GlobalSystem {
  double energy = 0.0;
  VecX force;  // full 3n gradient of E over all nodes
  SpMat H_cc, H_cd;
  bool has_hessian = false;
  int clamp_count = 0;
};

double sample_energy(const Vec24& u_e, const Mat9x24& G, const Mat3& A,
                     const Vec9& rstar);
Vec24 sample_gradient(const Vec24& u_e, const Mat9x24& G, const Mat3& A,
                      const Vec9& rstar);
Mat24 sample_hessian_u(const Mat9x24& G, const Mat3& A, const PolarFactors& f,
                       int* clamped = nullptr);
Mat24x9 sample_hessian_a(const Mat9x24& G, const Mat3& A, const Mat3& F,
                         const PolarFactors& f, int* clamped = nullptr);
Mat24x6 sample_hessian_b(const Mat9x24& G, const Mat3& A, const Mat3& F,
                         const PolarFactors& f, int* clamped = nullptr);

// V_e/N-weighted sums of the sample quantities, bitwise independent of the
// worker count (fixed chunked reduction order).
GlobalSystem assemble(const HexMesh& mesh, const SampleSet& samples,
                      const SampleActuation& act, const std::vector<Vec3>& u,
                      const Partition& part, bool with_hessian,
                      int workers = 1);

}  // namespace softact
