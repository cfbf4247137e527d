#include "softact/energy.hh"

#include <cmath>

#include "softact/parallel.hh"

namespace softact {

Partition Partition::from_tags(const HexMesh& mesh) {
  Partition p;
  p.free_slot.assign(mesh.num_nodes(), -1);
  p.dirichlet_slot.assign(mesh.num_nodes(), -1);
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    if (mesh.tags[n] == NodeTag::Bone) {
      p.dirichlet_slot[n] = static_cast<int>(p.dirichlet_nodes.size());
      p.dirichlet_nodes.push_back(n);
    } else {
      p.free_slot[n] = static_cast<int>(p.free_nodes.size());
      p.free_nodes.push_back(n);
    }
  }
  return p;
}

Partition Partition::all_free(int num_nodes) {
  Partition p;
  p.free_slot.resize(num_nodes);
  p.dirichlet_slot.assign(num_nodes, -1);
  p.free_nodes.resize(num_nodes);
  for (int n = 0; n < num_nodes; ++n) {
    p.free_slot[n] = n;
    p.free_nodes[n] = n;
  }
  return p;
}

VecX gather_free(const Partition& part, const std::vector<Vec3>& u) {
  VecX out(3 * part.num_free());
  for (int s = 0; s < part.num_free(); ++s)
    out.segment<3>(3 * s) = u[part.free_nodes[s]];
  return out;
}

VecX gather_dirichlet(const Partition& part, const std::vector<Vec3>& u) {
  VecX out(3 * part.num_dirichlet());
  for (int s = 0; s < part.num_dirichlet(); ++s)
    out.segment<3>(3 * s) = u[part.dirichlet_nodes[s]];
  return out;
}

void scatter_free(const Partition& part, const VecX& uc, std::vector<Vec3>& u) {
  for (int s = 0; s < part.num_free(); ++s)
    u[part.free_nodes[s]] = uc.segment<3>(3 * s);
}

void scatter_dirichlet(const Partition& part, const VecX& ud,
                       std::vector<Vec3>& u) {
  for (int s = 0; s < part.num_dirichlet(); ++s)
    u[part.dirichlet_nodes[s]] = ud.segment<3>(3 * s);
}

void SampleActuation::resize(int n) {
  b.assign(n, Vec6::Zero());
  A.assign(n, Mat3::Identity());
  rstar.assign(n, vec(Mat3::Identity()));
  rstar_fresh = false;
}

void SampleActuation::set_b(int i, const Vec6& params) {
  b[i] = params;
  A[i] = actuation_from_params({params});
  rstar_fresh = false;
}

double sample_energy(const Vec24& u_e, const Mat9x24& G, const Mat3& A,
                     const Vec9& rstar) {
  const Vec9 d = G * u_e - hat_sym(A) * rstar;
  return 0.5 * d.squaredNorm();
}

Vec24 sample_gradient(const Vec24& u_e, const Mat9x24& G, const Mat3& A,
                      const Vec9& rstar) {
  return G.transpose() * (G * u_e - hat_sym(A) * rstar);
}

Mat24 sample_hessian_u(const Mat9x24& G, const Mat3& A, const PolarFactors& f,
                       int* clamped) {
  const RotationGradient rg = rotation_gradient(f);
  if (clamped) *clamped += rg.clamped;
  const Mat9 Ahat = hat_sym(A);
  const Mat9x24 AG = Ahat * G;
  return G.transpose() * G - AG.transpose() * rg.H * AG;
}

Mat24x9 sample_hessian_a(const Mat9x24& G, const Mat3& A, const Mat3& F,
                         const PolarFactors& f, int* clamped) {
  const RotationGradient rg = rotation_gradient(f);
  if (clamped) *clamped += rg.clamped;
  const Mat9 Ahat = hat_sym(A);
  const Mat9 Fhat = hat_row(F);
  const Mat9 Rhat = hat_row(f.R);
  return -(G.transpose() * (Ahat * (rg.H * Fhat) + Rhat));
}

Mat24x6 sample_hessian_b(const Mat9x24& G, const Mat3& A, const Mat3& F,
                         const PolarFactors& f, int* clamped) {
  return sample_hessian_a(G, A, F, f, clamped) * actuation_param_jacobian();
}

namespace {

struct ChunkOut {
  double energy = 0.0;
  std::vector<std::pair<int, Vec24>> grads;  // (sample id, weighted gradient)
  std::vector<Triplet> cc, cd;
  int clamps = 0;
  int bad_sample = -1;
};

}  // namespace

GlobalSystem assemble(const HexMesh& mesh, const SampleSet& samples,
                      const SampleActuation& act, const std::vector<Vec3>& u,
                      const Partition& part, bool with_hessian, int workers) {
  if (act.size() != samples.size())
    throw ConfigError("actuation count does not match sample count");
  if (!act.rstar_fresh)
    throw NumericError("stale rotation cache: run local_step before assemble");

  const int n_samples = samples.size();
  std::vector<ChunkOut> chunks(num_chunks(n_samples));

  for_each_chunk(n_samples, workers, [&](int chunk, int begin, int end) {
    ChunkOut& out = chunks[chunk];
    for (int s = begin; s < end; ++s) {
      const Sample& sm = samples.samples[s];
      const Vec24 u_e = mesh.gather(sm.element, u);
      const double e = sm.weight * sample_energy(u_e, sm.G, act.A[s], act.rstar[s]);
      const Vec24 g = sm.weight * sample_gradient(u_e, sm.G, act.A[s], act.rstar[s]);
      if (!std::isfinite(e) || !g.allFinite()) {
        out.bad_sample = s;
        return;
      }
      out.energy += e;
      out.grads.emplace_back(s, g);

      if (!with_hessian) continue;
      const Mat3 F = unvec(sm.G * u_e);
      const PolarFactors f = polar_decompose(F * act.A[s]);
      const Mat24 H = sm.weight * sample_hessian_u(sm.G, act.A[s], f, &out.clamps);
      const auto& elem = mesh.elements[sm.element];
      for (int a = 0; a < 8; ++a) {
        const int fa = part.free_slot[elem[a]];
        if (fa < 0) continue;
        for (int b = 0; b < 8; ++b) {
          const int fb = part.free_slot[elem[b]];
          const int db = part.dirichlet_slot[elem[b]];
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
              const double v = H(3 * a + r, 3 * b + c);
              if (fb >= 0)
                out.cc.emplace_back(3 * fa + r, 3 * fb + c, v);
              else
                out.cd.emplace_back(3 * fa + r, 3 * db + c, v);
            }
        }
      }
    }
  });

  GlobalSystem sys;
  sys.force = VecX::Zero(3 * mesh.num_nodes());
  std::vector<Triplet> cc, cd;
  for (const auto& ch : chunks) {
    if (ch.bad_sample >= 0)
      throw NumericError("non-finite energy contribution at sample " +
                         std::to_string(ch.bad_sample));
    sys.energy += ch.energy;
    sys.clamp_count += ch.clamps;
    for (const auto& [s, g] : ch.grads) {
      const auto& elem = mesh.elements[samples.samples[s].element];
      for (int a = 0; a < 8; ++a)
        sys.force.segment<3>(3 * elem[a]) += g.segment<3>(3 * a);
    }
    cc.insert(cc.end(), ch.cc.begin(), ch.cc.end());
    cd.insert(cd.end(), ch.cd.begin(), ch.cd.end());
  }

  if (with_hessian) {
    sys.H_cc.resize(3 * part.num_free(), 3 * part.num_free());
    sys.H_cd.resize(3 * part.num_free(), 3 * part.num_dirichlet());
    sys.H_cc.setFromTriplets(cc.begin(), cc.end());
    sys.H_cd.setFromTriplets(cd.begin(), cd.end());
    sys.has_hessian = true;
  }
  return sys;
}

}  // namespace softact
