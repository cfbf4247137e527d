#include "softact/training.hh"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "json.hpp"
#include "softact/kernels.hh"

namespace softact {

using nlohmann::json;

std::string TrainConfig::to_json() const {
  json j;
  j["alpha"] = alpha;
  j["stage1_epochs"] = stage1_epochs;
  j["stage1_batch"] = stage1_batch;
  j["stage1_lr"] = stage1_lr;
  j["stage2_epochs"] = stage2_epochs;
  j["stage2_batch"] = stage2_batch;
  j["stage2_lr"] = stage2_lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["fit_iterations"] = fit_iterations;
  j["fit_lr"] = fit_lr;
  j["spring_stiffness_factor"] = spring_stiffness_factor;
  j["loss_delta"] = loss_delta;
  j["jaw_enabled"] = jaw_enabled;
  j["jaw_frozen"] = jaw_frozen;
  j["resolution_branch"] = resolution_branch;
  j["encoder_mode"] = encoder_mode;
  j["workers"] = workers;
  j["seed"] = seed;
  return j.dump(1);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config json: ") + e.what());
  }
  TrainConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage1_batch = j.value("stage1_batch", c.stage1_batch);
    c.stage1_lr = j.value("stage1_lr", c.stage1_lr);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.stage2_batch = j.value("stage2_batch", c.stage2_batch);
    c.stage2_lr = j.value("stage2_lr", c.stage2_lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.fit_iterations = j.value("fit_iterations", c.fit_iterations);
    c.fit_lr = j.value("fit_lr", c.fit_lr);
    c.spring_stiffness_factor =
        j.value("spring_stiffness_factor", c.spring_stiffness_factor);
    c.loss_delta = j.value("loss_delta", c.loss_delta);
    c.jaw_enabled = j.value("jaw_enabled", c.jaw_enabled);
    c.jaw_frozen = j.value("jaw_frozen", c.jaw_frozen);
    c.resolution_branch = j.value("resolution_branch", c.resolution_branch);
    c.encoder_mode = j.value("encoder_mode", c.encoder_mode);
    c.workers = j.value("workers", c.workers);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config field: ") + e.what());
  }
  if (c.stage1_batch < 1 || c.stage2_batch < 1)
    throw ConfigError("batch size must be >= 1");
  if (c.encoder_mode != "pca" && c.encoder_mode != "auto")
    throw ConfigError("encoder_mode must be \"pca\" or \"auto\"");
  return c;
}

// ---------------------------------------------------------------------------
// loss

LossResult compute_loss(const std::vector<Vec3>& u,
                        const EmbeddingMap& embedding,
                        const std::vector<std::array<int, 3>>& faces,
                        const TargetPose& target, double alpha, double delta) {
  const int nv = embedding.size();
  if (static_cast<int>(target.s.size()) != nv)
    throw ConfigError("target vertex count does not match the embedding");
  LossResult out;
  out.dL_du = VecX::Zero(3 * static_cast<int>(u.size()));

  std::vector<Vec3> shat = embedding.apply(u);
  std::vector<Vec3> gs(nv, Vec3::Zero());  // dL/dshat

  double err_sum = 0.0;
  for (int v = 0; v < nv; ++v) {
    Vec3 d = shat[v] - target.s[v];
    err_sum += d.norm();
    for (int c = 0; c < 3; ++c) {
      double a = std::abs(d(c));
      if (a <= delta) {
        out.position_term += d(c) * d(c) / (2.0 * delta);
        gs[v](c) += d(c) / delta;
      } else {
        out.position_term += a - delta / 2.0;
        gs[v](c) += d(c) > 0 ? 1.0 : -1.0;
      }
    }
  }
  out.mean_vertex_error = nv > 0 ? err_sum / nv : 0.0;

  if (alpha != 0.0) {
    if (static_cast<int>(target.n.size()) != nv)
      throw ConfigError("target normal count does not match the embedding");
    // Area-weighted vertex normals of the deformed embedded surface; the
    // whole chain shat -> face cross products -> vertex normals -> unit
    // normals is differentiated by hand.
    std::vector<Vec3> m(nv, Vec3::Zero());
    for (size_t f = 0; f < faces.size(); ++f) {
      const auto& fc = faces[f];
      Vec3 c = (shat[fc[1]] - shat[fc[0]]).cross(shat[fc[2]] - shat[fc[0]]);
      if (c.squaredNorm() == 0.0)
        throw NumericError("degenerate face " + std::to_string(f) +
                           " in the normal loss");
      for (int k = 0; k < 3; ++k) m[fc[k]] += c;
    }
    std::vector<Vec3> gm(nv, Vec3::Zero());
    for (int v = 0; v < nv; ++v) {
      double len = m[v].norm();
      if (len == 0.0)
        throw NumericError("zero vertex normal at vertex " +
                           std::to_string(v) + " in the normal loss");
      Vec3 nhat = m[v] / len;
      double r = 1.0 - nhat.dot(target.n[v]);
      out.normal_term += alpha * std::abs(r);
      Vec3 gn = (r >= 0 ? -alpha : alpha) * target.n[v];
      gm[v] = (gn - nhat * nhat.dot(gn)) / len;
    }
    for (const auto& fc : faces) {
      Vec3 e1 = shat[fc[1]] - shat[fc[0]];
      Vec3 e2 = shat[fc[2]] - shat[fc[0]];
      Vec3 gc = gm[fc[0]] + gm[fc[1]] + gm[fc[2]];
      Vec3 g1 = e2.cross(gc);
      Vec3 g2 = gc.cross(e1);
      gs[fc[1]] += g1;
      gs[fc[2]] += g2;
      gs[fc[0]] -= g1 + g2;
    }
  }

  out.value = out.position_term + out.normal_term;
  for (int v = 0; v < nv; ++v) {
    const auto& nd = embedding.nodes[v];
    const Vec8& w = embedding.weights[v];
    for (int k = 0; k < 8; ++k)
      out.dL_du.segment<3>(3 * nd[k]) += w(k) * gs[v];
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimizer

void adam_step(Tensor& t, double lr, double beta1, double beta2, double eps,
               int64_t step) {
  if (!t.grad.allFinite())
    throw NumericError("non-finite gradient on tensor " + t.name);
  t.adam_m = beta1 * t.adam_m + (1.0 - beta1) * t.grad;
  t.adam_v =
      beta2 * t.adam_v.array() + (1.0 - beta2) * t.grad.array().square();
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  t.value.array() -=
      lr * (t.adam_m.array() / c1) / ((t.adam_v.array() / c2).sqrt() + eps);
}

// ---------------------------------------------------------------------------
// context

std::vector<Vec3> SimContext::sample_points(int res) const {
  const auto& ss = resolutions.at(res).samples.samples;
  std::vector<Vec3> pts(ss.size());
  for (size_t i = 0; i < ss.size(); ++i) pts[i] = ss[i].point;
  return pts;
}

std::vector<Vec3> SimContext::rest_dirichlet() const {
  std::vector<Vec3> out(part.dirichlet_nodes.size());
  for (size_t s = 0; s < part.dirichlet_nodes.size(); ++s)
    out[s] = mesh->nodes[part.dirichlet_nodes[s]];
  return out;
}

SimContext make_context(const HexMesh& mesh, const SurfaceMesh& surface,
                        const EmbeddingMap& embedding,
                        const std::vector<int>& sample_counts,
                        const SolverOptions& solver) {
  if (sample_counts.empty())
    throw ConfigError("at least one sample resolution is required");
  SimContext ctx;
  ctx.mesh = &mesh;
  ctx.surface = &surface;
  ctx.embedding = &embedding;
  ctx.part = Partition::from_tags(mesh);
  ctx.solver = solver;
  for (int n : sample_counts) {
    SimResolution r;
    r.samples = build_samples(mesh, n);
    r.fact = prefactor(mesh, r.samples, ctx.part);
    r.sample_count = static_cast<double>(r.samples.size());
    ctx.resolutions.push_back(std::move(r));
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// stage 1 drag

ActuationInit stage1_init(const SimContext& ctx, const TargetPose& target,
                          const TrainConfig& cfg, SolveReport* report) {
  const HexMesh& mesh = *ctx.mesh;
  const SampleSet& samples = ctx.resolutions.at(0).samples;
  const int P = samples.size();

  Partition free = Partition::all_free(mesh.num_nodes());
  double k = cfg.spring_stiffness_factor * mesh.element_volume();
  GlobalFactorization fact = prefactor(mesh, samples, free, ctx.embedding, k);

  SampleActuation act;
  act.resize(P);
  for (int i = 0; i < P; ++i) act.set_b(i, Vec6::Zero());

  SpringSet springs{ctx.embedding, k, &target.s};
  SolveReport rep;
  QuasiStaticState state = solve_quasistatic(mesh, samples, act, fact,
                                             mesh.nodes, ctx.solver, &rep,
                                             &springs);
  if (report) *report = rep;

  ActuationInit out;
  out.dragged = state.u;
  out.converged = rep.final_relative_progress < ctx.solver.progress_tol;
  out.A.resize(P);
  for (int i = 0; i < P; ++i) {
    Vec24 u_e = mesh.gather(samples.samples[i].element, state.u);
    Mat3 F = unvec(samples.samples[i].G * u_e);
    PolarFactors pf = polar_decompose(F);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(pf.S);
    Vec3 ev = eig.eigenvalues().cwiseMax(1e-3);
    Mat3 A = eig.eigenvectors() * ev.asDiagonal() *
             eig.eigenvectors().transpose();
    out.A[i] = 0.5 * (A + A.transpose());
  }
  return out;
}

// ---------------------------------------------------------------------------
// trainer

namespace {

Vec6 actuation_targets_from_matrix(const Mat3& A) {
  Vec6 b;
  b << A(0, 0) - 1.0, A(0, 1), A(0, 2), A(1, 1) - 1.0, A(1, 2), A(2, 2) - 1.0;
  return b;
}

std::mt19937_64 epoch_rng(uint64_t seed, int stage, int epoch) {
  std::seed_seq seq{seed, static_cast<uint64_t>(stage),
                    static_cast<uint64_t>(epoch)};
  return std::mt19937_64(seq);
}

double wall_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Trainer::Trainer(Field& field, SimContext& ctx, const TrainConfig& cfg)
    : field_(field), ctx_(ctx), cfg_(cfg) {
  if (cfg_.resolution_branch && ctx_.resolutions.empty())
    throw ConfigError("resolution branch enabled without sample resolutions");
}

void Trainer::init_latent_table(int num_frames) {
  latents_.resize(num_frames);
  for (int i = 0; i < num_frames; ++i)
    latents_[i].init("latent." + std::to_string(i),
                     field_.config().latent_dim, 1);
}

VecX Trainer::frame_latent(const TargetPose& target) {
  return field_.encode(target.descriptor).z;
}

void Trainer::step_field(double lr) {
  for (Tensor* t : field_.tensors()) {
    if (cfg_.jaw_frozen && t->name.rfind("jaw.", 0) == 0) continue;
    adam_step(*t, lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps, adam_t_);
  }
  field_.bump_version();
}

void Trainer::pretrain(const std::vector<TargetPose>& targets,
                       const std::vector<ActuationInit>& inits) {
  const int F = static_cast<int>(targets.size());
  if (static_cast<int>(inits.size()) != F)
    throw ConfigError("one drag init per target frame is required");
  if (F == 0) return;
  const bool auto_mode = cfg_.encoder_mode == "auto";
  if (auto_mode && static_cast<int>(latents_.size()) != F)
    init_latent_table(F);

  const int P = ctx_.resolutions.at(0).samples.size();
  const double* rho =
      cfg_.resolution_branch ? &ctx_.resolutions.at(0).sample_count : nullptr;
  std::vector<Vec3> pts0 = ctx_.sample_points(0);
  std::vector<Vec3> bone = ctx_.rest_dirichlet();

  std::vector<MatX> b_target(F);
  for (int f = 0; f < F; ++f) {
    if (static_cast<int>(inits[f].A.size()) != P)
      throw ConfigError("drag init sample count mismatch");
    b_target[f].resize(6, P);
    for (int i = 0; i < P; ++i)
      b_target[f].col(i) = actuation_targets_from_matrix(inits[f].A[i]);
  }

  Vec6 w6;
  w6 << 1, 2, 2, 1, 2, 1;  // Frobenius weights of the off-diagonal pairs

  double first_loss = 0.0;
  int diverged_streak = 0;
  for (int epoch = 0; epoch < cfg_.stage1_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order(F);
    std::iota(order.begin(), order.end(), 0);
    auto rng = epoch_rng(cfg_.seed, 1, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    double lr = schedule(cfg_.stage1_lr, epoch, cfg_.stage1_epochs);
    for (int start = 0; start < F; start += cfg_.stage1_batch) {
      int stop = std::min(F, start + cfg_.stage1_batch);
      field_.zero_grads();
      if (auto_mode)
        for (int b = start; b < stop; ++b) latents_[order[b]].zero_grad();

      for (int b = start; b < stop; ++b) {
        int f = order[b];
        Field::EncCache enc;
        VecX z;
        if (auto_mode) {
          z = latents_[f].value.col(0);
        } else {
          enc = field_.encode(targets[f].descriptor);
          z = enc.z;
        }
        VecX gz = VecX::Zero(z.size());

        Field::ActCache cache =
            field_.eval_actuation(pts0, z, rho, cfg_.workers);
        MatX db = cache.b_out - b_target[f];
        for (int i = 0; i < P; ++i)
          epoch_loss += (w6.array() * db.col(i).array().square()).sum();
        MatX gb = 2.0 * (db.array().colwise() * w6.array()).matrix();
        field_.backward_actuation(cache, gb, gz, cfg_.workers);

        if (cfg_.jaw_enabled && !targets[f].u_d_init.empty()) {
          if (targets[f].u_d_init.size() != bone.size())
            throw ConfigError("jaw init size does not match the bone nodes");
          Field::JawCache jc = field_.eval_jaw(z);
          RigidTransform T = jaw_transform(jc.theta, ctx_.jaw_pivot);
          Vec5 gtheta = Vec5::Zero();
          for (size_t s = 0; s < bone.size(); ++s) {
            Vec3 d = T.apply(bone[s]) - targets[f].u_d_init[s];
            epoch_loss += d.squaredNorm();
            gtheta += jaw_point_jacobian(jc.theta, ctx_.jaw_pivot, bone[s])
                          .transpose() *
                      (2.0 * d);
          }
          if (!cfg_.jaw_frozen) field_.backward_jaw(jc, gtheta, gz);
        }

        if (auto_mode)
          latents_[f].grad.col(0) += gz;
        else
          field_.backward_encode(enc, gz);
      }

      ++adam_t_;
      step_field(lr);
      if (auto_mode)
        for (int b = start; b < stop; ++b)
          adam_step(latents_[order[b]], lr, cfg_.beta1, cfg_.beta2,
                    cfg_.adam_eps, adam_t_);
    }

    EpochStats st;
    st.stage = 1;
    st.epoch = epoch;
    st.loss = epoch_loss / F;
    st.wall_seconds = wall_since(t0);
    if (on_epoch) on_epoch(st);
    if (on_checkpoint) on_checkpoint(1, epoch);

    if (epoch == 0) first_loss = st.loss;
    if (epoch > 0 && st.loss > 10.0 * first_loss + 1e-12)
      ++diverged_streak;
    else
      diverged_streak = 0;
    if (diverged_streak >= 3)
      throw NumericError("pretraining loss diverged for 3 epochs");
  }
}

Trainer::FrameSim Trainer::simulate_latent(const VecX& z, int res_index,
                                           int warm_key) {
  const SimResolution& res = ctx_.resolutions.at(res_index);
  FrameSim sim;
  sim.res_index = res_index;
  const double* rho = cfg_.resolution_branch ? &res.sample_count : nullptr;
  sim.act_cache =
      field_.eval_actuation(ctx_.sample_points(res_index), z, rho,
                            cfg_.workers);
  const int P = sim.act_cache.points();
  sim.act.resize(P);
  for (int i = 0; i < P; ++i) sim.act.set_b(i, sim.act_cache.b_out.col(i));

  std::vector<Vec3> u_init = ctx_.mesh->nodes;
  if (warm_key >= 0) {
    auto it = warm_.find({warm_key, res_index});
    if (it != warm_.end()) u_init = it->second;
  }
  if (cfg_.jaw_enabled && ctx_.part.num_dirichlet() > 0) {
    sim.jaw_cache = field_.eval_jaw(z);
    RigidTransform T = jaw_transform(sim.jaw_cache.theta, ctx_.jaw_pivot);
    for (int nd : ctx_.part.dirichlet_nodes)
      u_init[nd] = T.apply(ctx_.mesh->nodes[nd]);
  } else {
    for (int nd : ctx_.part.dirichlet_nodes) u_init[nd] = ctx_.mesh->nodes[nd];
  }

  QuasiStaticState state =
      solve_quasistatic(*ctx_.mesh, res.samples, sim.act, res.fact, u_init,
                        ctx_.solver, &sim.report);
  sim.u = state.u;
  if (warm_key >= 0) warm_[{warm_key, res_index}] = sim.u;
  return sim;
}

double Trainer::frame_backward(const TargetPose& target, FrameSim& sim,
                               VecX& grad_z, LossResult* out_loss) {
  const SimResolution& res = ctx_.resolutions.at(sim.res_index);
  LossResult loss = compute_loss(sim.u, *ctx_.embedding, ctx_.surface->faces,
                                 target, cfg_.alpha, cfg_.loss_delta);

  GlobalSystem sys = assemble(*ctx_.mesh, res.samples, sim.act, sim.u,
                              ctx_.part, true, cfg_.workers);
  const int nc = ctx_.part.num_free();
  VecX dc(3 * nc);
  for (int i = 0; i < nc; ++i)
    dc.segment<3>(3 * i) = loss.dL_du.segment<3>(3 * ctx_.part.free_nodes[i]);
  VecX lambda = adjoint_solve(sys, dc);

  std::vector<Vec6> gb = grad_actuation(lambda, *ctx_.mesh, res.samples,
                                        sim.act, sim.u, ctx_.part,
                                        cfg_.workers);
  MatX gbm(6, static_cast<int>(gb.size()));
  for (size_t i = 0; i < gb.size(); ++i) gbm.col(static_cast<int>(i)) = gb[i];
  field_.backward_actuation(sim.act_cache, gbm, grad_z, cfg_.workers);

  if (cfg_.jaw_enabled && !cfg_.jaw_frozen && ctx_.part.num_dirichlet() > 0) {
    VecX gud = grad_dirichlet(lambda, sys);
    const auto& dn = ctx_.part.dirichlet_nodes;
    for (size_t s = 0; s < dn.size(); ++s)
      gud.segment<3>(3 * static_cast<int>(s)) +=
          loss.dL_du.segment<3>(3 * dn[s]);
    Vec5 gtheta = Vec5::Zero();
    for (size_t s = 0; s < dn.size(); ++s)
      gtheta += jaw_point_jacobian(sim.jaw_cache.theta, ctx_.jaw_pivot,
                                   ctx_.mesh->nodes[dn[s]])
                    .transpose() *
                gud.segment<3>(3 * static_cast<int>(s));
    field_.backward_jaw(sim.jaw_cache, gtheta, grad_z);
  }

  if (out_loss) *out_loss = loss;
  return loss.value;
}

void Trainer::train_stage2(const std::vector<TargetPose>& targets) {
  const int F = static_cast<int>(targets.size());
  if (F == 0) return;
  const bool auto_mode = cfg_.encoder_mode == "auto";
  if (auto_mode && static_cast<int>(latents_.size()) != F)
    throw ConfigError("latent table not initialized for this frame count");
  const int R = static_cast<int>(ctx_.resolutions.size());

  double first_loss = 0.0;
  int diverged_streak = 0;
  for (int epoch = 0; epoch < cfg_.stage2_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order(F);
    std::iota(order.begin(), order.end(), 0);
    auto rng = epoch_rng(cfg_.seed, 2, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats st;
    st.stage = 2;
    st.epoch = epoch;
    double lr = schedule(cfg_.stage2_lr, epoch, cfg_.stage2_epochs);
    int done = 0;
    double iter_sum = 0.0;

    for (int start = 0; start < F; start += cfg_.stage2_batch) {
      int stop = std::min(F, start + cfg_.stage2_batch);
      field_.zero_grads();
      if (auto_mode)
        for (int b = start; b < stop; ++b) latents_[order[b]].zero_grad();

      int batch_ok = 0;
      for (int b = start; b < stop; ++b) {
        int f = order[b];
        try {
          Field::EncCache enc;
          VecX z;
          if (auto_mode) {
            z = latents_[f].value.col(0);
          } else {
            enc = field_.encode(targets[f].descriptor);
            z = enc.z;
          }
          FrameSim sim = simulate_latent(z, (epoch + f) % R, f);
          VecX gz = VecX::Zero(z.size());
          LossResult lr_frame;
          double lval = frame_backward(targets[f], sim, gz, &lr_frame);
          if (auto_mode)
            latents_[f].grad.col(0) += gz;
          else
            field_.backward_encode(enc, gz);
          st.loss += lval;
          st.position_term += lr_frame.position_term;
          st.normal_term += lr_frame.normal_term;
          st.mean_vertex_error += lr_frame.mean_vertex_error;
          iter_sum += sim.report.iterations;
          ++batch_ok;
        } catch (const NumericError&) {
          ++st.skipped_frames;
        }
      }

      if (batch_ok > 0) {
        ++adam_t_;
        step_field(lr);
        if (auto_mode)
          for (int b = start; b < stop; ++b)
            adam_step(latents_[order[b]], lr, cfg_.beta1, cfg_.beta2,
                      cfg_.adam_eps, adam_t_);
      }
      done += batch_ok;
    }

    if (done > 0) {
      st.loss /= done;
      st.position_term /= done;
      st.normal_term /= done;
      st.mean_vertex_error /= done;
      st.mean_solver_iterations = iter_sum / done;
    }
    st.wall_seconds = wall_since(t0);
    if (on_epoch) on_epoch(st);
    if (on_checkpoint) on_checkpoint(2, epoch);

    if (st.skipped_frames * 5 > F)
      throw NumericError("more than 20% of frames failed to solve in epoch " +
                         std::to_string(epoch));
    if (epoch == 0) first_loss = st.loss;
    if (epoch > 0 && st.loss > 10.0 * first_loss + 1e-12)
      ++diverged_streak;
    else
      diverged_streak = 0;
    if (diverged_streak >= 3)
      throw NumericError("training loss diverged for 3 epochs");
  }
}

FitResult Trainer::fit_new_pose(const TargetPose& target, int iterations) {
  Field::EncCache enc = field_.encode(target.descriptor);
  Tensor zt;
  zt.init("fit.z", field_.config().latent_dim, 1);
  zt.value.col(0) = enc.z;

  FitResult out;
  for (int it = 1; it <= iterations; ++it) {
    FrameSim sim = simulate_latent(zt.value.col(0), 0, -1);
    field_.zero_grads();  // parameter grads from the backward are discarded
    VecX gz = VecX::Zero(zt.value.rows());
    out.loss_trace.push_back(frame_backward(target, sim, gz, nullptr));
    zt.grad.col(0) = gz;
    adam_step(zt, cfg_.fit_lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps, it);
  }
  field_.zero_grads();

  out.z = zt.value.col(0);
  FrameSim sim = simulate_latent(out.z, 0, -1);
  out.loss = compute_loss(sim.u, *ctx_.embedding, ctx_.surface->faces, target,
                          cfg_.alpha, cfg_.loss_delta)
                 .value;
  if (cfg_.jaw_enabled) out.theta = sim.jaw_cache.theta;
  return out;
}

std::vector<std::vector<Vec3>> Trainer::interpolate(const VecX& z1,
                                                    const VecX& z2,
                                                    int steps) {
  if (steps < 1) throw ConfigError("interpolation needs at least one step");
  if (z1.size() != z2.size())
    throw ConfigError("latent endpoints have different sizes");
  std::vector<std::vector<Vec3>> out;
  out.reserve(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    VecX z;
    if (i == 0)
      z = z1;
    else if (i == steps)
      z = z2;
    else {
      double t = static_cast<double>(i) / steps;
      z = (1.0 - t) * z1 + t * z2;
    }
    FrameSim sim = simulate_latent(z, 0, -1);
    out.push_back(ctx_.embedding->apply(sim.u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// descriptors

VecX DescriptorBasis::project(const std::vector<Vec3>& s) const {
  if (static_cast<int>(s.size()) * 3 != mean.size())
    throw ConfigError("surface size does not match the descriptor basis");
  VecX d(mean.size());
  for (size_t v = 0; v < s.size(); ++v)
    d.segment<3>(3 * static_cast<int>(v)) = s[v];
  return basis.transpose() * (d - mean);
}

void DescriptorBasis::save(const std::string& path) const {
  json j;
  j["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
  json cols = json::array();
  for (int c = 0; c < basis.cols(); ++c)
    cols.push_back(std::vector<double>(basis.col(c).data(),
                                       basis.col(c).data() + basis.rows()));
  j["basis"] = cols;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(1) << "\n";
  if (!f.good()) throw IoError("write failed for " + path);
}

DescriptorBasis DescriptorBasis::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("bad descriptor basis file " + path + ": " + e.what());
  }
  DescriptorBasis out;
  try {
    std::vector<double> m = j.at("mean").get<std::vector<double>>();
    out.mean = Eigen::Map<VecX>(m.data(), static_cast<int>(m.size()));
    const json& cols = j.at("basis");
    out.basis.resize(out.mean.size(), static_cast<int>(cols.size()));
    for (int c = 0; c < out.basis.cols(); ++c) {
      std::vector<double> col = cols.at(c).get<std::vector<double>>();
      if (static_cast<int>(col.size()) != out.mean.size())
        throw IoError("descriptor basis column size mismatch in " + path);
      out.basis.col(c) = Eigen::Map<VecX>(col.data(), out.mean.size());
    }
  } catch (const json::exception& e) {
    throw IoError("bad descriptor basis file " + path + ": " + e.what());
  }
  return out;
}

DescriptorBasis build_pca_basis(const std::vector<std::vector<Vec3>>& frames,
                                int dim) {
  if (frames.empty()) throw ConfigError("no frames to build a basis from");
  const int nv = static_cast<int>(frames[0].size());
  const int F = static_cast<int>(frames.size());
  MatX X(3 * nv, F);
  for (int f = 0; f < F; ++f) {
    if (static_cast<int>(frames[f].size()) != nv)
      throw ConfigError("frames have inconsistent vertex counts");
    for (int v = 0; v < nv; ++v)
      X.col(f).segment<3>(3 * v) = frames[f][v];
  }
  DescriptorBasis out;
  out.mean = X.rowwise().mean();
  X.colwise() -= out.mean;
  Eigen::JacobiSVD<MatX> svd(X, Eigen::ComputeThinU);
  out.basis = MatX::Zero(3 * nv, dim);
  int take = std::min<int>(dim, static_cast<int>(svd.matrixU().cols()));
  out.basis.leftCols(take) = svd.matrixU().leftCols(take);
  return out;
}

}  // namespace softact
