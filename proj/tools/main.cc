// Command-line front end: mesh preparation, training, fitting, simulation,
// latent interpolation, gradient checking, and artifact export.
//
// Exit codes: 0 success, 2 I/O error, 3 configuration error, 4 numerical
// failure. All file outputs are deterministic for a fixed seed and worker
// count (no wall-clock values are written).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "softact/adjoint.hh"
#include "softact/energy.hh"
#include "softact/field.hh"
#include "softact/forward_solver.hh"
#include "softact/hex_mesh.hh"
#include "softact/surface_mesh.hh"
#include "softact/training.hh"
#include "softact/types.hh"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace softact;

namespace {

// ---------------------------------------------------------------------------
// small file helpers

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return text;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// project manifest

struct Manifest {
  fs::path root;  // directory holding the manifest file
  fs::path surface, hex_mesh, targets_dir, checkpoints_dir;
  std::vector<std::pair<Vec3, Vec3>> bone_boxes;
  Vec3 jaw_pivot = Vec3::Zero();
  std::vector<int> resolutions{8};
  uint64_t seed = 1;
  FieldConfig field;
  bool domain_given = false;
  bool reference_count_given = false;
  TrainConfig train;
  SolverOptions solver;
};

Vec3 vec3_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(what + " must be an array of three numbers");
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>());
}

Manifest load_manifest(const fs::path& path) {
  const json j = parse_json_file(path);
  Manifest m;
  m.root = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto resolve = [&](const std::string& key, bool required) {
    if (!j.contains(key)) {
      if (required) throw ConfigError("manifest is missing \"" + key + "\"");
      return fs::path();
    }
    return m.root / j.at(key).get<std::string>();
  };
  m.surface = resolve("surface", true);
  m.hex_mesh = resolve("hex_mesh", true);
  m.targets_dir = resolve("targets_dir", false);
  m.checkpoints_dir = resolve("checkpoints_dir", false);
  if (m.checkpoints_dir.empty()) m.checkpoints_dir = m.root / "checkpoints";
  for (const fs::path& p : {m.surface, m.hex_mesh})
    if (!fs::exists(p)) throw IoError("manifest references missing file " + p.string());
  if (!m.targets_dir.empty() && !fs::exists(m.targets_dir))
    throw IoError("manifest references missing directory " + m.targets_dir.string());

  if (j.contains("bone_boxes"))
    for (const json& b : j.at("bone_boxes"))
      m.bone_boxes.emplace_back(vec3_of(b.at("lo"), "bone box lo"),
                                vec3_of(b.at("hi"), "bone box hi"));
  if (j.contains("jaw_pivot")) m.jaw_pivot = vec3_of(j.at("jaw_pivot"), "jaw_pivot");
  if (j.contains("resolutions")) {
    m.resolutions = j.at("resolutions").get<std::vector<int>>();
    if (m.resolutions.empty())
      throw ConfigError("manifest resolutions must not be empty");
  }
  if (j.contains("seed")) m.seed = j.at("seed").get<uint64_t>();
  if (j.contains("train")) m.train = TrainConfig::from_json(j.at("train").dump());
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    m.solver.progress_tol = s.value("progress_tol", m.solver.progress_tol);
    m.solver.max_iterations = s.value("max_iterations", m.solver.max_iterations);
  }
  if (j.contains("field")) {
    const json& f = j.at("field");
    FieldConfig& c = m.field;
    c.width = f.value("width", c.width);
    c.trunk_layers = f.value("trunk_layers", c.trunk_layers);
    c.omega0 = f.value("omega0", c.omega0);
    c.latent_dim = f.value("latent_dim", c.latent_dim);
    c.mod_hidden = f.value("mod_hidden", c.mod_hidden);
    c.encoder_hidden = f.value("encoder_hidden", c.encoder_hidden);
    c.descriptor_dim = f.value("descriptor_dim", c.descriptor_dim);
    c.jaw_hidden = f.value("jaw_hidden", c.jaw_hidden);
    c.res_hidden = f.value("res_hidden", c.res_hidden);
    c.leaky_slope = f.value("leaky_slope", c.leaky_slope);
    c.pe_dim = f.value("pe_dim", c.pe_dim);
    if (f.contains("reference_sample_count")) {
      c.reference_sample_count = f.at("reference_sample_count").get<double>();
      m.reference_count_given = true;
    }
    if (f.contains("domain_lo") || f.contains("domain_hi")) {
      c.domain_lo = vec3_of(f.at("domain_lo"), "domain_lo");
      c.domain_hi = vec3_of(f.at("domain_hi"), "domain_hi");
      m.domain_given = true;
    }
  }
  if (m.train.jaw_enabled && !j.contains("jaw_pivot"))
    throw ConfigError("jaw_enabled requires a jaw_pivot in the manifest");
  return m;
}

// Loaded assets. The context points into the owned meshes, so the struct is
// built in place and never moved.
struct Project {
  Manifest man;
  SurfaceMesh surface;
  HexMesh mesh;
  EmbeddingMap embedding;
  SimContext ctx;
  std::unique_ptr<Field> field;

  fs::path checkpoint_dir(const std::string& name) const {
    return man.checkpoints_dir / name;
  }
};

struct Overrides {
  int workers = 0;        // 0 keeps the manifest value
  uint64_t seed = 0;      // 0 keeps the manifest value
  int extra_resolution = 0;
};

std::unique_ptr<Project> load_project(const fs::path& manifest_path,
                                      const Overrides& ov) {
  auto p = std::make_unique<Project>();
  p->man = load_manifest(manifest_path);
  if (ov.workers > 0) p->man.train.workers = ov.workers;
  if (ov.seed > 0) p->man.seed = ov.seed;
  p->man.solver.workers = p->man.train.workers;

  p->surface = read_obj(p->man.surface.string());
  p->surface.validate();
  p->mesh = read_hex_mesh(p->man.hex_mesh.string());
  for (const auto& [lo, hi] : p->man.bone_boxes)
    tag_nodes_in_box(p->mesh, lo, hi, NodeTag::Bone);
  p->embedding = embed_surface(p->mesh, p->surface);

  std::vector<int> res = p->man.resolutions;
  if (ov.extra_resolution > 0 &&
      std::find(res.begin(), res.end(), ov.extra_resolution) == res.end())
    res.push_back(ov.extra_resolution);
  p->ctx = make_context(p->mesh, p->surface, p->embedding, res, p->man.solver);
  p->ctx.jaw_pivot = p->man.jaw_pivot;

  if (!p->man.domain_given) {
    p->man.field.domain_lo = p->mesh.grid_origin;
    p->man.field.domain_hi =
        p->mesh.grid_origin + p->mesh.h * Vec3(p->mesh.grid_dims[0],
                                               p->mesh.grid_dims[1],
                                               p->mesh.grid_dims[2]);
  }
  if (!p->man.reference_count_given)
    p->man.field.reference_sample_count =
        static_cast<double>(p->ctx.resolutions.back().sample_count);
  p->field = std::make_unique<Field>(p->man.field, p->man.seed);
  return p;
}

int resolution_index(const Project& p, int samples_per_element) {
  for (size_t i = 0; i < p.ctx.resolutions.size(); ++i)
    if (p.ctx.resolutions[i].samples.n_per_element == samples_per_element)
      return static_cast<int>(i);
  throw ConfigError("resolution " + std::to_string(samples_per_element) +
                    " is not available in this context");
}

// ---------------------------------------------------------------------------
// targets

struct LoadedTargets {
  std::vector<TargetPose> poses;
  std::vector<std::string> stems;
};

TargetPose pose_from_surface(const Project& p, const SurfaceMesh& obj) {
  if (obj.vertices.size() != p.surface.vertices.size())
    throw ConfigError("target surface has " +
                      std::to_string(obj.vertices.size()) + " vertices, project surface has " +
                      std::to_string(p.surface.vertices.size()));
  TargetPose t;
  t.s = obj.vertices;
  t.n = vertex_normals(t.s, p.surface.faces);
  return t;
}

void apply_sidecar(const Project& p, const fs::path& sidecar, TargetPose& t) {
  if (!fs::exists(sidecar)) return;
  const json j = parse_json_file(sidecar);
  if (j.contains("descriptor")) {
    const auto v = j.at("descriptor").get<std::vector<double>>();
    t.descriptor = Eigen::Map<const VecX>(v.data(), v.size());
  }
  if (j.contains("jaw_theta")) {
    const auto v = j.at("jaw_theta").get<std::vector<double>>();
    if (v.size() != 5) throw ConfigError(sidecar.string() + ": jaw_theta needs 5 entries");
    Vec5 theta = Eigen::Map<const Vec5>(v.data());
    const RigidTransform T = jaw_transform(theta, p.ctx.jaw_pivot);
    for (const Vec3& x : p.ctx.rest_dirichlet()) t.u_d_init.push_back(T.apply(x));
  } else if (j.contains("u_d_init")) {
    for (const json& row : j.at("u_d_init"))
      t.u_d_init.push_back(vec3_of(row, "u_d_init row"));
    if (t.u_d_init.size() != p.ctx.rest_dirichlet().size())
      throw ConfigError(sidecar.string() + ": u_d_init size does not match the pinned node count");
  }
}

fs::path basis_path(const Project& p) { return p.man.checkpoints_dir / "pca.json"; }

// Descriptors come from sidecar files when present, otherwise from the PCA
// basis (built over the training frames on first use).
LoadedTargets load_targets(const Project& p, bool allow_build_basis) {
  if (p.man.targets_dir.empty())
    throw ConfigError("this command needs a targets_dir in the manifest");
  LoadedTargets out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p.man.targets_dir))
    if (e.path().extension() == ".obj") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw ConfigError("no .obj targets in " + p.man.targets_dir.string());
  for (const fs::path& f : files) {
    TargetPose t = pose_from_surface(p, read_obj(f.string()));
    apply_sidecar(p, fs::path(f).replace_extension(".json"), t);
    out.poses.push_back(std::move(t));
    out.stems.push_back(f.stem().string());
  }

  const int dim = p.man.field.descriptor_dim;
  bool all_given = true;
  for (const TargetPose& t : out.poses) {
    if (t.descriptor.size() == 0) all_given = false;
    else if (t.descriptor.size() != dim)
      throw ConfigError("descriptor size does not match descriptor_dim");
  }
  if (all_given || p.man.train.encoder_mode == "auto") {
    for (TargetPose& t : out.poses)
      if (t.descriptor.size() == 0) t.descriptor = VecX::Zero(dim);
    return out;
  }

  DescriptorBasis basis;
  if (fs::exists(basis_path(p))) {
    basis = DescriptorBasis::load(basis_path(p).string());
  } else if (allow_build_basis) {
    std::vector<std::vector<Vec3>> frames;
    for (const TargetPose& t : out.poses) frames.push_back(t.s);
    basis = build_pca_basis(frames, dim);
    fs::create_directories(p.man.checkpoints_dir);
    basis.save(basis_path(p).string());
  } else {
    throw ConfigError("no descriptor sidecars and no PCA basis; run train --stage 1 first");
  }
  for (TargetPose& t : out.poses)
    if (t.descriptor.size() == 0) t.descriptor = basis.project(t.s);
  return out;
}

TargetPose load_single_target(const Project& p, const fs::path& obj_path) {
  TargetPose t = pose_from_surface(p, read_obj(obj_path.string()));
  apply_sidecar(p, fs::path(obj_path).replace_extension(".json"), t);
  if (t.descriptor.size() == 0) {
    if (!fs::exists(basis_path(p)))
      throw ConfigError("no descriptor sidecar and no PCA basis; run train --stage 1 first");
    t.descriptor = DescriptorBasis::load(basis_path(p).string()).project(t.s);
  }
  return t;
}

// ---------------------------------------------------------------------------
// exports

void export_surface(const Project& p, const fs::path& path,
                    const std::vector<Vec3>& vertices) {
  SurfaceMesh out;
  out.vertices = vertices;
  out.faces = p.surface.faces;
  fs::create_directories(path.parent_path());
  write_obj(path.string(), out);
}

void export_errors(const Project& p, const fs::path& stem,
                   const std::vector<Vec3>& got, const TargetPose& target) {
  std::string csv = "vertex,error\n";
  std::vector<double> err(got.size());
  double emax = 0.0;
  for (size_t v = 0; v < got.size(); ++v) {
    err[v] = (got[v] - target.s[v]).norm();
    emax = std::max(emax, err[v]);
    csv += std::to_string(v) + "," + fmt(err[v]) + "\n";
  }
  write_text(fs::path(stem.string() + "_error.csv"), csv);

  std::vector<Vec3> colors(got.size());
  for (size_t v = 0; v < got.size(); ++v) {
    const double t = emax > 0.0 ? err[v] / emax : 0.0;
    colors[v] = Vec3(t, 0.0, 1.0 - t);
  }
  SurfaceMesh mesh;
  mesh.vertices = got;
  mesh.faces = p.surface.faces;
  write_obj_colored(stem.string() + "_error.obj", mesh, colors);
}

json report_json(const SolveReport& rep) {
  json j;
  j["iterations"] = rep.iterations;
  j["final_relative_progress"] = rep.final_relative_progress;
  j["final_force_norm"] = rep.final_force_norm;
  j["final_force_inf_norm"] = rep.final_force_inf_norm;
  j["clamp_warnings"] = rep.clamp_warnings;
  j["energy_trace"] = rep.energy_trace;
  return j;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string project;
  int stage = 1;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, const Overrides& ov) {
  auto p = load_project(a.project, ov);
  const fs::path prereq = a.resume
      ? p->checkpoint_dir("stage" + std::to_string(a.stage))
      : p->checkpoint_dir("stage1");
  if ((a.stage == 2 || a.resume) && !fs::exists(prereq / "manifest.json"))
    throw ConfigError("stage " + std::to_string(a.stage) +
                      " needs a checkpoint at " + prereq.string() +
                      "; run the earlier stage first");
  LoadedTargets targets = load_targets(*p, a.stage == 1);
  const int F = static_cast<int>(targets.poses.size());
  const bool auto_mode = p->man.train.encoder_mode == "auto";

  Trainer trainer(*p->field, p->ctx, p->man.train);
  if (auto_mode) trainer.init_latent_table(F);
  std::vector<Tensor*> extra;
  std::vector<const Tensor*> extra_c;
  for (Tensor& t : trainer.latent_table()) {
    extra.push_back(&t);
    extra_c.push_back(&t);
  }

  const fs::path ckpt = p->checkpoint_dir("stage" + std::to_string(a.stage));
  if (a.stage == 2 || a.resume) {
    const fs::path from = a.resume ? ckpt : p->checkpoint_dir("stage1");
    if (!fs::exists(from / "manifest.json"))
      throw ConfigError("stage " + std::to_string(a.stage) + " needs a checkpoint at " +
                        from.string() + "; run the earlier stage first");
    trainer.set_adam_t(p->field->load_checkpoint(from.string(), extra));
  }

  const fs::path metrics = p->man.checkpoints_dir /
                           ("stage" + std::to_string(a.stage) + "_metrics.csv");
  fs::create_directories(p->man.checkpoints_dir);
  {
    std::ofstream head(metrics, a.resume ? std::ios::app : std::ios::trunc);
    if (!a.resume)
      head << "epoch,loss,position,normal,mean_vertex_error,"
              "mean_solver_iterations,skipped\n";
  }
  trainer.on_epoch = [&](const EpochStats& st) {
    std::ofstream row(metrics, std::ios::app);
    row << st.epoch << "," << fmt(st.loss) << "," << fmt(st.position_term)
        << "," << fmt(st.normal_term) << "," << fmt(st.mean_vertex_error)
        << "," << fmt(st.mean_solver_iterations) << "," << st.skipped_frames
        << "\n";
    std::printf("stage %d epoch %4d loss %-12.6g mve %.6g\n", st.stage,
                st.epoch, st.loss, st.mean_vertex_error);
    std::fflush(stdout);
  };
  trainer.on_checkpoint = [&](int, int) {
    p->field->save_checkpoint(ckpt.string(), trainer.adam_t(), extra_c);
  };

  try {
    if (a.stage == 1) {
      std::vector<ActuationInit> inits;
      for (int f = 0; f < F; ++f) {
        inits.push_back(stage1_init(p->ctx, targets.poses[f], p->man.train));
        if (!inits.back().converged)
          std::fprintf(stderr, "warning: drag solve for frame %d hit the iteration cap\n", f);
      }
      trainer.pretrain(targets.poses, inits);
    } else {
      trainer.train_stage2(targets.poses);
    }
  } catch (const NumericError& e) {
    const fs::path abort_dir = p->checkpoint_dir("stage" + std::to_string(a.stage) + "_abort");
    p->field->save_checkpoint(abort_dir.string(), trainer.adam_t(), extra_c);
    json j;
    j["error"] = e.what();
    j["adam_t"] = trainer.adam_t();
    write_text(abort_dir / "abort.json", j.dump(1));
    std::fprintf(stderr, "training aborted, state saved to %s\n", abort_dir.string().c_str());
    throw;
  }
  p->field->save_checkpoint(ckpt.string(), trainer.adam_t(), extra_c);

  // final per-frame exports through the simulator
  const fs::path exp = p->man.root / "export" / ("stage" + std::to_string(a.stage));
  for (int f = 0; f < F; ++f) {
    VecX z = auto_mode ? VecX(trainer.latent_table()[f].value.col(0))
                       : trainer.frame_latent(targets.poses[f]);
    Trainer::FrameSim sim = trainer.simulate_latent(z, 0);
    const std::vector<Vec3> got = p->embedding.apply(sim.u);
    export_surface(*p, exp / (targets.stems[f] + ".obj"), got);
    export_errors(*p, exp / targets.stems[f], got, targets.poses[f]);
  }
  std::printf("stage %d done: %d frames, checkpoint %s\n", a.stage, F,
              ckpt.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// checkpoint selection shared by fit / simulate / interp

int64_t load_best_checkpoint(Project& p, const std::string& requested) {
  std::vector<fs::path> candidates;
  if (!requested.empty()) candidates.push_back(requested);
  else {
    candidates.push_back(p.checkpoint_dir("stage2"));
    candidates.push_back(p.checkpoint_dir("stage1"));
  }
  for (const fs::path& c : candidates)
    if (fs::exists(c / "manifest.json")) return p.field->load_checkpoint(c.string());
  if (!requested.empty())
    throw IoError("checkpoint " + requested + " not found");
  std::fprintf(stderr, "note: no trained checkpoint found, using the freshly initialized field\n");
  return 0;
}

VecX read_latent(const Project& p, const fs::path& path) {
  const json j = parse_json_file(path);
  const json& arr = j.is_object() ? j.at("z") : j;
  const auto v = arr.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != p.man.field.latent_dim)
    throw ConfigError(path.string() + ": latent size does not match latent_dim");
  return Eigen::Map<const VecX>(v.data(), v.size());
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string project, target, checkpoint, out;
  int iters = -1;
};

int cmd_fit(const FitArgs& a, const Overrides& ov) {
  auto p = load_project(a.project, ov);
  load_best_checkpoint(*p, a.checkpoint);
  const TargetPose target = load_single_target(*p, a.target);

  Trainer trainer(*p->field, p->ctx, p->man.train);
  const int iters = a.iters >= 0 ? a.iters : p->man.train.fit_iterations;
  FitResult fit = trainer.fit_new_pose(target, iters);

  const fs::path out = a.out.empty() ? p->man.root / "export" / "fit" : fs::path(a.out);
  json j;
  j["z"] = std::vector<double>(fit.z.data(), fit.z.data() + fit.z.size());
  j["theta"] = std::vector<double>(fit.theta.data(), fit.theta.data() + 5);
  j["loss"] = fit.loss;
  j["loss_trace"] = fit.loss_trace;
  write_text(out / "fit.json", j.dump(1));

  Trainer::FrameSim sim = trainer.simulate_latent(fit.z, 0);
  const std::vector<Vec3> got = p->embedding.apply(sim.u);
  export_surface(*p, out / "fitted.obj", got);
  export_errors(*p, out / "fitted", got, target);
  std::printf("fit loss %.6g after %d iterations -> %s\n", fit.loss, iters,
              out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
  std::string project, checkpoint, z_file, target, out;
  int resolution = 0;
};

int cmd_simulate(const SimArgs& a, const Overrides& ov_in) {
  Overrides ov = ov_in;
  ov.extra_resolution = a.resolution;
  auto p = load_project(a.project, ov);
  load_best_checkpoint(*p, a.checkpoint);
  if (a.z_file.empty() == a.target.empty())
    throw ConfigError("simulate needs exactly one of --z and --target");

  TargetPose target;
  VecX z;
  if (!a.z_file.empty()) {
    z = read_latent(*p, a.z_file);
  } else {
    target = load_single_target(*p, a.target);
    z = p->field->encode(target.descriptor).z;
  }

  Trainer trainer(*p->field, p->ctx, p->man.train);
  const int res = a.resolution > 0 ? resolution_index(*p, a.resolution) : 0;
  Trainer::FrameSim sim = trainer.simulate_latent(z, res);
  const std::vector<Vec3> got = p->embedding.apply(sim.u);

  const fs::path out = a.out.empty() ? p->man.root / "export" / "simulate" : fs::path(a.out);
  export_surface(*p, out / "surface.obj", got);
  json j = report_json(sim.report);
  j["z"] = std::vector<double>(z.data(), z.data() + z.size());
  j["samples_per_element"] = p->ctx.resolutions[res].samples.n_per_element;
  if (p->man.train.jaw_enabled)
    j["theta"] = std::vector<double>(sim.jaw_cache.theta.data(),
                                     sim.jaw_cache.theta.data() + 5);
  write_text(out / "report.json", j.dump(1));
  if (!a.target.empty()) export_errors(*p, out / "surface", got, target);
  std::printf("solved in %d iterations -> %s\n", sim.report.iterations,
              out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// interp

struct InterpArgs {
  std::string project, from, to, out;
  int steps = 1;
};

VecX endpoint_latent(Project& p, const fs::path& path) {
  if (path.extension() == ".obj")
    return p.field->encode(load_single_target(p, path).descriptor).z;
  return read_latent(p, path);
}

int cmd_interp(const InterpArgs& a, const Overrides& ov) {
  auto p = load_project(a.project, ov);
  load_best_checkpoint(*p, "");
  const VecX z1 = endpoint_latent(*p, a.from);
  const VecX z2 = endpoint_latent(*p, a.to);

  Trainer trainer(*p->field, p->ctx, p->man.train);
  const auto surfaces = trainer.interpolate(z1, z2, a.steps);
  const fs::path out = a.out.empty() ? p->man.root / "export" / "interp" : fs::path(a.out);
  for (size_t i = 0; i < surfaces.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%03zu.obj", i);
    export_surface(*p, out / name, surfaces[i]);
  }
  std::printf("wrote %zu surfaces -> %s\n", surfaces.size(), out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck: adjoint gradients vs central differences through the solver on
// a built-in two-element bar. Both finite-difference solves start from rest
// so their termination bias cancels.

SurfaceMesh box_surface(const Vec3& lo, const Vec3& hi) {
  SurfaceMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                              i & 4 ? hi.z() : lo.z()));
  m.faces = {{0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}};
  return m;
}

struct GradArgs {
  std::string scale = "tiny";
  std::string out;
};

int cmd_gradcheck(const GradArgs& a, const Overrides& ov) {
  if (a.scale != "tiny")
    throw ConfigError("only --scale tiny is supported");
  const uint64_t seed = ov.seed > 0 ? ov.seed : 1234;

  HexMesh mesh = voxelize(box_surface(Vec3::Zero(), Vec3(2, 1, 1)), 1.0);
  tag_nodes_in_box(mesh, Vec3(-0.1, -1, -1), Vec3(1e-9, 2, 2), NodeTag::Bone);
  Partition part = Partition::from_tags(mesh);
  SampleSet samples = build_samples(mesh, 8);
  GlobalFactorization fact = prefactor(mesh, samples, part);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.05);
  SampleActuation act;
  act.resize(samples.size());
  for (int s = 0; s < samples.size(); ++s) {
    Vec6 b;
    for (int i = 0; i < 6; ++i) b(i) = nd(rng);
    act.set_b(s, b);
  }
  VecX g(3 * part.num_free());
  for (int i = 0; i < g.size(); ++i) g(i) = nd(rng) * 20.0;

  SolverOptions opt;
  opt.progress_tol = 1e-10;
  opt.max_iterations = 3000;
  opt.workers = ov.workers > 0 ? ov.workers : 1;

  auto solve_loss = [&](SampleActuation a2, const std::vector<Vec3>& u_init) {
    local_step(u_init, mesh, samples, a2);
    QuasiStaticState st = solve_quasistatic(mesh, samples, a2, fact, u_init, opt);
    return g.dot(gather_free(part, st.u));
  };

  SampleActuation base = act;
  local_step(mesh.nodes, mesh, samples, base);
  QuasiStaticState st = solve_quasistatic(mesh, samples, base, fact, mesh.nodes, opt);
  GlobalSystem sys = assemble(mesh, samples, base, st.u, part, true, opt.workers);
  AdjointReport arep;
  const VecX lambda = adjoint_solve(sys, g, &arep);
  const std::vector<Vec6> gb = grad_actuation(lambda, mesh, samples, base, st.u, part);
  const VecX gd = grad_dirichlet(lambda, sys);

  const double h = 1e-3;
  std::uniform_int_distribution<int> pick_s(0, samples.size() - 1);
  std::uniform_int_distribution<int> pick_j(0, 5);
  json checks = json::array();
  double max_rel = 0.0;

  VecX want_b(20), got_b(20);
  for (int k = 0; k < 20; ++k) {
    const int s = pick_s(rng), jc = pick_j(rng);
    SampleActuation ap = act, am = act;
    Vec6 bp = ap.b[s], bm = am.b[s];
    bp(jc) += h;
    bm(jc) -= h;
    ap.set_b(s, bp);
    am.set_b(s, bm);
    const double fd = (solve_loss(ap, mesh.nodes) - solve_loss(am, mesh.nodes)) / (2 * h);
    got_b(k) = gb[s](jc);
    want_b(k) = fd;
    checks.push_back({{"kind", "actuation"}, {"sample", s}, {"component", jc},
                      {"analytic", gb[s](jc)}, {"fd", fd}});
  }
  const double rel_b = (got_b - want_b).norm() / std::max(want_b.norm(), 1e-12);
  max_rel = std::max(max_rel, rel_b);

  std::uniform_int_distribution<int> pick_d(0, 3 * part.num_dirichlet() - 1);
  VecX want_d(6), got_d(6);
  for (int k = 0; k < 6; ++k) {
    const int c = pick_d(rng);
    auto shift = [&](double d) {
      std::vector<Vec3> u0 = mesh.nodes;
      u0[part.dirichlet_nodes[c / 3]](c % 3) += d;
      SampleActuation a2 = act;
      local_step(u0, mesh, samples, a2);
      QuasiStaticState s2 = solve_quasistatic(mesh, samples, a2, fact, u0, opt);
      return g.dot(gather_free(part, s2.u));
    };
    const double fd = (shift(h) - shift(-h)) / (2 * h);
    got_d(k) = gd(c);
    want_d(k) = fd;
    checks.push_back({{"kind", "dirichlet"}, {"coordinate", c},
                      {"analytic", gd(c)}, {"fd", fd}});
  }
  const double rel_d = (got_d - want_d).norm() / std::max(want_d.norm(), 1e-12);
  max_rel = std::max(max_rel, rel_d);

  json j;
  j["checks"] = checks;
  j["actuation_rel_error"] = rel_b;
  j["dirichlet_rel_error"] = rel_d;
  j["max_rel_error"] = max_rel;
  j["pass"] = max_rel < 1e-3;
  if (!a.out.empty()) write_text(a.out, j.dump(1));
  std::printf("actuation rel %.3g, dirichlet rel %.3g\n", rel_b, rel_d);
  if (max_rel >= 1e-3)
    throw NumericError("gradient check failed, max relative error " + fmt(max_rel));
  return 0;
}

// ---------------------------------------------------------------------------
// voxelize

struct VoxArgs {
  std::string surface, cut_spec, out;
  double h = 0.0;
  std::vector<double> bone_flat;
};

int cmd_voxelize(const VoxArgs& a) {
  SurfaceMesh surf = read_obj(a.surface);
  surf.validate();
  HexMesh mesh = voxelize(surf, a.h);
  if (!a.cut_spec.empty())
    mesh = duplicate_cut_vertices(mesh, read_cut_spec(a.cut_spec, mesh));
  if (a.bone_flat.size() % 6 != 0)
    throw ConfigError("--bone-box needs six comma-separated numbers per use");
  for (size_t i = 0; i + 5 < a.bone_flat.size(); i += 6)
    tag_nodes_in_box(mesh,
                     Vec3(a.bone_flat[i], a.bone_flat[i + 1], a.bone_flat[i + 2]),
                     Vec3(a.bone_flat[i + 3], a.bone_flat[i + 4], a.bone_flat[i + 5]),
                     NodeTag::Bone);
  write_hex_mesh(a.out, mesh);
  std::printf("%d elements, %d nodes -> %s\n", mesh.num_elements(),
              mesh.num_nodes(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxelized soft-body simulation and inverse-actuation toolkit"};
  app.set_help_flag("--help", "print usage");
  app.require_subcommand(1);
  Overrides ov;
  app.add_option("--workers", ov.workers, "worker thread cap");
  app.add_option("--seed", ov.seed, "override the manifest seed");

  VoxArgs vox;
  auto* cv = app.add_subcommand("voxelize", "rasterize a closed surface into a hex mesh");
  cv->add_option("--surface", vox.surface, "input OBJ")->required();
  cv->add_option("--h", vox.h, "voxel edge length")->required();
  cv->add_option("--cut-spec", vox.cut_spec, "JSON list of element face pairs to open");
  cv->add_option("--out", vox.out, "output mesh JSON")->required();
  cv->add_option("--bone-box", vox.bone_flat, "pin nodes inside x0,y0,z0,x1,y1,z1")
      ->delimiter(',');

  TrainArgs tr;
  auto* ct = app.add_subcommand("train", "run one training stage");
  ct->add_option("--project", tr.project, "project manifest JSON")
      ->envname("SOFTACT_PROJECT")->required();
  ct->add_option("--stage", tr.stage, "1 regresses drag targets, 2 trains through the simulator")
      ->check(CLI::IsMember({1, 2}))->required();
  ct->add_flag("--resume", tr.resume, "continue from this stage's checkpoint");

  FitArgs fit;
  auto* cf = app.add_subcommand("fit", "fit the latent code to a new pose");
  cf->add_option("--project", fit.project)->envname("SOFTACT_PROJECT")->required();
  cf->add_option("--target", fit.target, "target surface OBJ")->required();
  cf->add_option("--checkpoint", fit.checkpoint, "checkpoint directory");
  cf->add_option("--iters", fit.iters, "latent optimization iterations");
  cf->add_option("--out", fit.out, "output directory");

  SimArgs sim;
  auto* cs = app.add_subcommand("simulate", "solve one pose and export the surface");
  cs->add_option("--project", sim.project)->envname("SOFTACT_PROJECT")->required();
  cs->add_option("--checkpoint", sim.checkpoint, "checkpoint directory");
  cs->add_option("--z", sim.z_file, "latent code JSON");
  cs->add_option("--target", sim.target, "target surface OBJ (encoded to z)");
  cs->add_option("--resolution", sim.resolution, "samples per element");
  cs->add_option("--out", sim.out, "output directory");

  InterpArgs in;
  auto* ci = app.add_subcommand("interp", "solve along a latent-space segment");
  ci->add_option("--project", in.project)->envname("SOFTACT_PROJECT")->required();
  ci->add_option("--from", in.from, "latent JSON or target OBJ")->required();
  ci->add_option("--to", in.to, "latent JSON or target OBJ")->required();
  ci->add_option("--steps", in.steps, "number of intervals")->required();
  ci->add_option("--out", in.out, "output directory");

  GradArgs gc;
  auto* cg = app.add_subcommand("gradcheck", "adjoint gradients vs finite differences");
  cg->add_option("--scale", gc.scale, "problem size (tiny)");
  cg->add_option("--out", gc.out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    if (cv->parsed()) return cmd_voxelize(vox);
    if (ct->parsed()) return cmd_train(tr, ov);
    if (cf->parsed()) return cmd_fit(fit, ov);
    if (cs->parsed()) return cmd_simulate(sim, ov);
    if (ci->parsed()) return cmd_interp(in, ov);
    if (cg->parsed()) return cmd_gradcheck(gc, ov);
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
