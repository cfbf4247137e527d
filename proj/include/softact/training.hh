#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "softact/adjoint.hh"
#include "softact/energy.hh"
#include "softact/field.hh"
#include "softact/forward_solver.hh"
#include "softact/hex_mesh.hh"
#include "softact/surface_mesh.hh"
#include "softact/types.hh"

namespace softact {

struct TargetPose {
  std::vector<Vec3> s;         // observed surface vertex positions
  std::vector<Vec3> n;         // unit normals, recomputed from s
  VecX descriptor;             // encoder input
  std::vector<Vec3> u_d_init;  // per Dirichlet slot; empty if unused
};

struct TrainConfig {
  double alpha = 0.0;  // normal-loss weight
  int stage1_epochs = 1700;
  int stage1_batch = 4;
  double stage1_lr = 2e-4;
  int stage2_epochs = 30;
  int stage2_batch = 1;
  double stage2_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int fit_iterations = 10;
  double fit_lr = 1e-3;
  double spring_stiffness_factor = 1000.0;  // k = factor * V_e
  double loss_delta = 1e-6;               // smoothed-L1 knee, length units
  bool jaw_enabled = false;
  bool jaw_frozen = false;       // keep the jaw path out of the backward pass
  bool resolution_branch = false;
  std::string encoder_mode = "pca";  // "pca" or "auto"
  int workers = 1;
  uint64_t seed = 1;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct LossResult {
  double value = 0.0;
  double position_term = 0.0;
  double normal_term = 0.0;
  double mean_vertex_error = 0.0;
  VecX dL_du;  // 3 * num_nodes
};

// eq of the objective: per-coordinate smoothed L1 on positions plus
// alpha * |1 - nhat . n| on area-weighted vertex normals, with exact
// gradients chained through the trilinear embedding.
LossResult compute_loss(const std::vector<Vec3>& u,
                        const EmbeddingMap& embedding,
                        const std::vector<std::array<int, 3>>& faces,
                        const TargetPose& target, double alpha,
                        double delta = 1e-6);

// Standard bias-corrected ADAM update on one tensor.
void adam_step(Tensor& t, double lr, double beta1, double beta2, double eps,
               int64_t step);

struct SimResolution {
  SampleSet samples;
  GlobalFactorization fact;
  double sample_count = 0;  // raw count fed to the resolution branch
};

// Read-only simulation assets shared by training, fitting, and the CLI.
struct SimContext {
  const HexMesh* mesh = nullptr;
  const SurfaceMesh* surface = nullptr;
  const EmbeddingMap* embedding = nullptr;
  Partition part;
  std::vector<SimResolution> resolutions;
  Vec3 jaw_pivot = Vec3::Zero();
  SolverOptions solver;

  std::vector<Vec3> sample_points(int res) const;
  std::vector<Vec3> rest_dirichlet() const;  // rest positions of bone nodes
};

SimContext make_context(const HexMesh& mesh, const SurfaceMesh& surface,
                        const EmbeddingMap& embedding,
                        const std::vector<int>& sample_counts,
                        const SolverOptions& solver);

struct ActuationInit {
  std::vector<Mat3> A;        // per sample of resolution 0, SPD
  std::vector<Vec3> dragged;  // node positions after the drag solve
  bool converged = true;
};

// Spring-drag solve toward the target surface (everything free, shape
// energy at A = I), then A := symmetric polar factor of F per sample,
// floored to SPD.
ActuationInit stage1_init(const SimContext& ctx, const TargetPose& target,
                          const TrainConfig& cfg, SolveReport* report = nullptr);

struct EpochStats {
  int stage = 0;
  int epoch = 0;
  double loss = 0.0;
  double position_term = 0.0;
  double normal_term = 0.0;
  double mean_vertex_error = 0.0;
  double mean_solver_iterations = 0.0;
  double wall_seconds = 0.0;
  int skipped_frames = 0;
};

struct FitResult {
  VecX z;
  Vec5 theta = Vec5::Zero();
  double loss = 0.0;
  std::vector<double> loss_trace;
};

class Trainer {
 public:
  Trainer(Field& field, SimContext& ctx, const TrainConfig& cfg);

  // Stage 1: regress the field to spring-drag actuation targets (and the
  // jaw to the dragged Dirichlet positions) without the simulator.
  void pretrain(const std::vector<TargetPose>& targets,
                const std::vector<ActuationInit>& inits);

  // Stage 2: simulator in the loop, gradients via the adjoint solve.
  void train_stage2(const std::vector<TargetPose>& targets);

  FitResult fit_new_pose(const TargetPose& target, int iterations);
  FitResult fit_new_pose(const TargetPose& target) {
    return fit_new_pose(target, cfg_.fit_iterations);
  }

  // steps intervals -> steps+1 embedded surfaces, each solved from rest.
  std::vector<std::vector<Vec3>> interpolate(const VecX& z1, const VecX& z2,
                                             int steps);

  struct FrameSim {
    Field::ActCache act_cache;
    Field::JawCache jaw_cache;
    SampleActuation act;
    std::vector<Vec3> u;
    SolveReport report;
    int res_index = 0;
  };
  // Forward-simulate one latent code. warm_key >= 0 reuses that frame's
  // previous solution as the initial guess.
  FrameSim simulate_latent(const VecX& z, int res_index, int warm_key = -1);

  VecX frame_latent(const TargetPose& target);  // encoder or latent table

  int64_t adam_t() const { return adam_t_; }
  void set_adam_t(int64_t t) { adam_t_ = t; }
  std::vector<Tensor>& latent_table() { return latents_; }
  void init_latent_table(int num_frames);

  std::function<void(const EpochStats&)> on_epoch;
  std::function<void(int stage, int epoch)> on_checkpoint;

 private:
  double frame_backward(const TargetPose& target, FrameSim& sim, VecX& grad_z,
                        LossResult* out_loss);
  void step_field(double lr);
  double schedule(double lr0, int epoch, int total) const {
    return lr0 * (1.0 - static_cast<double>(epoch) / total);
  }

  Field& field_;
  SimContext& ctx_;
  TrainConfig cfg_;
  int64_t adam_t_ = 0;
  std::vector<Tensor> latents_;  // auto-decoder mode
  std::map<std::pair<int, int>, std::vector<Vec3>> warm_;  // (frame,res) -> u
};

// PCA shape descriptor over target surfaces (displacement from rest).
struct DescriptorBasis {
  VecX mean;   // 3V
  MatX basis;  // 3V x dim, orthonormal columns
  VecX project(const std::vector<Vec3>& s) const;
  void save(const std::string& path) const;
  static DescriptorBasis load(const std::string& path);
};

DescriptorBasis build_pca_basis(const std::vector<std::vector<Vec3>>& frames,
                                int dim);

}  // namespace softact
