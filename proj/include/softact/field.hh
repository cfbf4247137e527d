#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softact/types.hh"

namespace softact {

struct Tensor {
  std::string name;
  MatX value, grad, adam_m, adam_v;

  void init(const std::string& n, int rows, int cols);
  void zero_grad() { grad.setZero(); }
  int64_t count() const { return value.size(); }
};

struct FieldConfig {
  int width = 256;       // trunk hidden width
  int trunk_layers = 4;  // modulated sine layers before the linear output
  double omega0 = 30.0;
  int latent_dim = 32;
  int mod_hidden = 64;
  int encoder_hidden = 64;
  int descriptor_dim = 16;
  int jaw_hidden = 32;
  int res_hidden = 32;
  double leaky_slope = 0.01;
  int pe_dim = 4;  // resolution positional encoding size
  double reference_sample_count = 64.0;
  // material-space box used to normalize points to [-1,1]^3
  Vec3 domain_lo = -Vec3::Ones();
  Vec3 domain_hi = Vec3::Ones();

  int mod_dim() const { return 3 + (trunk_layers - 1) * width; }
  bool operator==(const FieldConfig& o) const;
  std::string to_json() const;
  static FieldConfig from_json(const std::string& text);
};

struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 pivot = Vec3::Zero();
  Vec3 apply(const Vec3& x) const { return pivot + R * (x - pivot) + t; }
};

// Rotation about the pivot by theta_x, then theta_y, then translation.
RigidTransform jaw_transform(const Vec5& theta, const Vec3& pivot);
// 3x5 Jacobian of the transformed point w.r.t. (theta_x, theta_y, t).
Eigen::Matrix<double, 3, 5> jaw_point_jacobian(const Vec5& theta,
                                               const Vec3& pivot,
                                               const Vec3& x);

// Coordinate network stack: a 4-layer sine trunk whose per-layer input
// features are scaled by modulation coefficients decoded from the latent
// code, plus encoder, jaw, and resolution-conditioning MLPs. Forward passes
// cache activations; backward passes are exact reverse mode, implemented
// here (no external autodiff).
class Field {
 public:
  Field(const FieldConfig& cfg, uint64_t seed);

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  void zero_grads();

  // Parameter mutations (optimizer steps, checkpoint loads) bump the
  // version; backward against an older forward cache is an error.
  uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  struct ModCache {
    VecX z_eff;           // latent after the optional resolution shift
    VecX mod_pre, mod_h;  // modulation MLP internals
    VecX a;               // concatenated per-layer input scales
    bool has_res = false;
    double rho_norm = 0.0;
    VecX pe, res_pre0, res_h0, res_pre1, res_h1;
  };

  struct ActCache {
    uint64_t version = 0;
    ModCache mod;
    MatX x_norm;            // 3 x P
    std::vector<MatX> pre;  // per layer, width x P (argument of sin / omega0)
    std::vector<MatX> h;    // per layer activations, width x P
    MatX b_out;             // 6 x P
    int points() const { return static_cast<int>(b_out.cols()); }
  };

  // resolution = total sample count, or nullptr to bypass the branch.
  ActCache eval_actuation(const std::vector<Vec3>& points, const VecX& z,
                          const double* resolution, int workers = 1) const;
  // grad_b is 6 x P; accumulates parameter grads and adds dL/dz to grad_z.
  void backward_actuation(const ActCache& cache, const MatX& grad_b,
                          VecX& grad_z, int workers = 1);

  struct EncCache {
    uint64_t version = 0;
    VecX desc, pre0, h0, pre1, h1, z;
  };
  EncCache encode(const VecX& descriptor) const;
  void backward_encode(const EncCache& cache, const VecX& grad_z);

  struct JawCache {
    uint64_t version = 0;
    VecX z, pre0, h0, pre1, h1;
    Vec5 theta;
  };
  JawCache eval_jaw(const VecX& z) const;
  void backward_jaw(const JawCache& cache, const Vec5& grad_theta,
                    VecX& grad_z);

  const FieldConfig& config() const { return cfg_; }

  // Checkpoint: directory holding manifest.json plus little-endian float64
  // blobs (value + ADAM moments) per tensor; round-trip is bit-exact.
  void save_checkpoint(const std::string& dir, int64_t adam_t,
                       const std::vector<const Tensor*>& extra = {}) const;
  int64_t load_checkpoint(const std::string& dir,
                          const std::vector<Tensor*>& extra = {});

 private:
  void check_fresh(uint64_t cache_version) const;

  FieldConfig cfg_;
  uint64_t version_ = 0;

  std::vector<Tensor> trunk_w_, trunk_b_;  // one per trunk layer
  Tensor out_w_, out_b_;
  Tensor mod_w0_, mod_b0_, mod_w1_, mod_b1_;
  Tensor enc_w0_, enc_b0_, enc_w1_, enc_b1_, enc_w2_, enc_b2_;
  Tensor jaw_w0_, jaw_b0_, jaw_w1_, jaw_b1_, jaw_w2_, jaw_b2_;
  Tensor res_w0_, res_b0_, res_w1_, res_b1_, res_w2_, res_b2_;
};

}  // namespace softact
