#include "softact/field.hh"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "softact/parallel.hh"

namespace softact {

void Tensor::init(const std::string& n, int rows, int cols) {
  name = n;
  value.setZero(rows, cols);
  grad.setZero(rows, cols);
  adam_m.setZero(rows, cols);
  adam_v.setZero(rows, cols);
}

bool FieldConfig::operator==(const FieldConfig& o) const {
  return width == o.width && trunk_layers == o.trunk_layers &&
         omega0 == o.omega0 && latent_dim == o.latent_dim &&
         mod_hidden == o.mod_hidden && encoder_hidden == o.encoder_hidden &&
         descriptor_dim == o.descriptor_dim && jaw_hidden == o.jaw_hidden &&
         res_hidden == o.res_hidden && leaky_slope == o.leaky_slope &&
         pe_dim == o.pe_dim &&
         reference_sample_count == o.reference_sample_count &&
         domain_lo == o.domain_lo && domain_hi == o.domain_hi;
}

std::string FieldConfig::to_json() const {
  nlohmann::json j;
  j["width"] = width;
  j["trunk_layers"] = trunk_layers;
  j["omega0"] = omega0;
  j["latent_dim"] = latent_dim;
  j["mod_hidden"] = mod_hidden;
  j["encoder_hidden"] = encoder_hidden;
  j["descriptor_dim"] = descriptor_dim;
  j["jaw_hidden"] = jaw_hidden;
  j["res_hidden"] = res_hidden;
  j["leaky_slope"] = leaky_slope;
  j["pe_dim"] = pe_dim;
  j["reference_sample_count"] = reference_sample_count;
  j["domain_lo"] = {domain_lo(0), domain_lo(1), domain_lo(2)};
  j["domain_hi"] = {domain_hi(0), domain_hi(1), domain_hi(2)};
  return j.dump(1);
}

FieldConfig FieldConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FieldConfig c;
  c.width = j.at("width").get<int>();
  c.trunk_layers = j.at("trunk_layers").get<int>();
  c.omega0 = j.at("omega0").get<double>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.mod_hidden = j.at("mod_hidden").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.descriptor_dim = j.at("descriptor_dim").get<int>();
  c.jaw_hidden = j.at("jaw_hidden").get<int>();
  c.res_hidden = j.at("res_hidden").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.pe_dim = j.at("pe_dim").get<int>();
  c.reference_sample_count = j.at("reference_sample_count").get<double>();
  for (int d = 0; d < 3; ++d) {
    c.domain_lo(d) = j.at("domain_lo").at(d).get<double>();
    c.domain_hi(d) = j.at("domain_hi").at(d).get<double>();
  }
  return c;
}

RigidTransform jaw_transform(const Vec5& theta, const Vec3& pivot) {
  const double cx = std::cos(theta(0)), sx = std::sin(theta(0));
  const double cy = std::cos(theta(1)), sy = std::sin(theta(1));
  Mat3 Rx, Ry;
  Rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  Ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  RigidTransform T;
  T.R = Ry * Rx;
  T.t = theta.segment<3>(2);
  T.pivot = pivot;
  return T;
}

Eigen::Matrix<double, 3, 5> jaw_point_jacobian(const Vec5& theta,
                                               const Vec3& pivot,
                                               const Vec3& x) {
  const double cx = std::cos(theta(0)), sx = std::sin(theta(0));
  const double cy = std::cos(theta(1)), sy = std::sin(theta(1));
  Mat3 Rx, Ry, dRx, dRy;
  Rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  Ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  dRx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
  dRy << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
  const Vec3 d = x - pivot;
  Eigen::Matrix<double, 3, 5> J;
  J.col(0) = Ry * (dRx * d);
  J.col(1) = dRy * (Rx * d);
  J.block<3, 3>(0, 2).setIdentity();
  return J;
}

namespace {

double leaky(double x, double slope) { return x >= 0 ? x : slope * x; }
double leaky_d(double x, double slope) { return x >= 0 ? 1.0 : slope; }

VecX leaky_vec(const VecX& x, double slope) {
  VecX y(x.size());
  for (int i = 0; i < x.size(); ++i) y(i) = leaky(x(i), slope);
  return y;
}

VecX leaky_d_vec(const VecX& x, double slope) {
  VecX y(x.size());
  for (int i = 0; i < x.size(); ++i) y(i) = leaky_d(x(i), slope);
  return y;
}

}  // namespace

Field::Field(const FieldConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.width < 1 || cfg_.trunk_layers < 1 || cfg_.latent_dim < 1 ||
      cfg_.omega0 <= 0 || cfg_.pe_dim != 4)
    throw ConfigError("invalid field configuration");

  const int w = cfg_.width;
  trunk_w_.resize(cfg_.trunk_layers);
  trunk_b_.resize(cfg_.trunk_layers);
  for (int l = 0; l < cfg_.trunk_layers; ++l) {
    const int in = l == 0 ? 3 : w;
    trunk_w_[l].init("trunk.w" + std::to_string(l), w, in);
    trunk_b_[l].init("trunk.b" + std::to_string(l), w, 1);
  }
  out_w_.init("trunk.out_w", 6, w);
  out_b_.init("trunk.out_b", 6, 1);
  mod_w0_.init("mod.w0", cfg_.mod_hidden, cfg_.latent_dim);
  mod_b0_.init("mod.b0", cfg_.mod_hidden, 1);
  mod_w1_.init("mod.w1", cfg_.mod_dim(), cfg_.mod_hidden);
  mod_b1_.init("mod.b1", cfg_.mod_dim(), 1);
  enc_w0_.init("enc.w0", cfg_.encoder_hidden, cfg_.descriptor_dim);
  enc_b0_.init("enc.b0", cfg_.encoder_hidden, 1);
  enc_w1_.init("enc.w1", cfg_.encoder_hidden, cfg_.encoder_hidden);
  enc_b1_.init("enc.b1", cfg_.encoder_hidden, 1);
  enc_w2_.init("enc.w2", cfg_.latent_dim, cfg_.encoder_hidden);
  enc_b2_.init("enc.b2", cfg_.latent_dim, 1);
  jaw_w0_.init("jaw.w0", cfg_.jaw_hidden, cfg_.latent_dim);
  jaw_b0_.init("jaw.b0", cfg_.jaw_hidden, 1);
  jaw_w1_.init("jaw.w1", cfg_.jaw_hidden, cfg_.jaw_hidden);
  jaw_b1_.init("jaw.b1", cfg_.jaw_hidden, 1);
  jaw_w2_.init("jaw.w2", 5, cfg_.jaw_hidden);
  jaw_b2_.init("jaw.b2", 5, 1);
  res_w0_.init("res.w0", cfg_.res_hidden, cfg_.pe_dim);
  res_b0_.init("res.b0", cfg_.res_hidden, 1);
  res_w1_.init("res.w1", cfg_.res_hidden, cfg_.res_hidden);
  res_b1_.init("res.b1", cfg_.res_hidden, 1);
  res_w2_.init("res.w2", cfg_.latent_dim, cfg_.res_hidden);
  res_b2_.init("res.b2", cfg_.latent_dim, 1);

  std::mt19937_64 gen(seed);
  auto fill_uniform = [&](Tensor& t, double lim) {
    std::uniform_real_distribution<double> dist(-lim, lim);
    for (int64_t i = 0; i < t.value.size(); ++i) t.value.data()[i] = dist(gen);
  };
  auto fill_xavier = [&](Tensor& t) {
    fill_uniform(t, std::sqrt(6.0 / (t.value.rows() + t.value.cols())));
  };

  // Sine-network scheme: first layer 1/n, hidden sqrt(6/n)/omega0. The
  // modulation output and every head's last layer start at zero so the
  // initial state is the unmodulated identity (a = 1, b = 0, Theta = 0).
  fill_uniform(trunk_w_[0], 1.0 / 3.0);
  for (int l = 1; l < cfg_.trunk_layers; ++l)
    fill_uniform(trunk_w_[l], std::sqrt(6.0 / w) / cfg_.omega0);
  fill_xavier(mod_w0_);
  // mod_b0 must not start at zero: z = 0 with zero hidden activations is a
  // stationary point that permanently freezes the latent pathway. A nonzero
  // hidden bias keeps a = 1 since the output layer is still zero.
  fill_uniform(mod_b0_, 0.5);
  fill_xavier(enc_w0_);
  fill_xavier(enc_w1_);
  fill_xavier(jaw_w0_);
  fill_xavier(jaw_w1_);
  fill_xavier(res_w0_);
  fill_xavier(res_w1_);
  // The resolution branch is a residual correction on z; it starts small so
  // the early training signal flows through the shared latent path.
  res_w0_.value *= 0.05;
  res_w1_.value *= 0.05;
}

std::vector<Tensor*> Field::tensors() {
  std::vector<Tensor*> out;
  for (int l = 0; l < cfg_.trunk_layers; ++l) {
    out.push_back(&trunk_w_[l]);
    out.push_back(&trunk_b_[l]);
  }
  for (Tensor* t :
       {&out_w_, &out_b_, &mod_w0_, &mod_b0_, &mod_w1_, &mod_b1_, &enc_w0_,
        &enc_b0_, &enc_w1_, &enc_b1_, &enc_w2_, &enc_b2_, &jaw_w0_, &jaw_b0_,
        &jaw_w1_, &jaw_b1_, &jaw_w2_, &jaw_b2_, &res_w0_, &res_b0_, &res_w1_,
        &res_b1_, &res_w2_, &res_b2_})
    out.push_back(t);
  return out;
}

std::vector<const Tensor*> Field::tensors() const {
  auto mut = const_cast<Field*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

void Field::zero_grads() {
  for (Tensor* t : tensors()) t->zero_grad();
}

void Field::check_fresh(uint64_t cache_version) const {
  if (cache_version != version_)
    throw NumericError(
        "stale forward cache: parameters changed since evaluation");
}

Field::ActCache Field::eval_actuation(const std::vector<Vec3>& points,
                                      const VecX& z, const double* resolution,
                                      int workers) const {
  if (z.size() != cfg_.latent_dim)
    throw ConfigError("latent size mismatch in eval_actuation");
  const int P = static_cast<int>(points.size());
  const int w = cfg_.width;
  const int L = cfg_.trunk_layers;

  ActCache c;
  c.version = version_;
  c.mod.z_eff = z;
  c.mod.has_res = resolution != nullptr;
  if (resolution) {
    c.mod.rho_norm = *resolution / cfg_.reference_sample_count;
    const double r = c.mod.rho_norm;
    c.mod.pe.resize(4);
    c.mod.pe << std::sin(M_PI * r), std::cos(M_PI * r), std::sin(2 * M_PI * r),
        std::cos(2 * M_PI * r);
    c.mod.res_pre0 = res_w0_.value * c.mod.pe + res_b0_.value.col(0);
    c.mod.res_h0 = leaky_vec(c.mod.res_pre0, cfg_.leaky_slope);
    c.mod.res_pre1 = res_w1_.value * c.mod.res_h0 + res_b1_.value.col(0);
    c.mod.res_h1 = leaky_vec(c.mod.res_pre1, cfg_.leaky_slope);
    c.mod.z_eff += res_w2_.value * c.mod.res_h1 + res_b2_.value.col(0);
  }
  c.mod.mod_pre = mod_w0_.value * c.mod.z_eff + mod_b0_.value.col(0);
  c.mod.mod_h = leaky_vec(c.mod.mod_pre, cfg_.leaky_slope);
  c.mod.a = ((mod_w1_.value * c.mod.mod_h + mod_b1_.value.col(0)).array() + 1.0)
                .matrix();
  if (!c.mod.a.allFinite())
    throw NumericError("non-finite modulation coefficients");

  c.x_norm.resize(3, P);
  const Vec3 span = cfg_.domain_hi - cfg_.domain_lo;
  if ((span.array() <= 0).any())
    throw ConfigError("degenerate field domain box");
  for (int p = 0; p < P; ++p)
    c.x_norm.col(p) =
        (2.0 * (points[p] - cfg_.domain_lo).array() / span.array() - 1.0)
            .matrix();

  c.pre.resize(L);
  c.h.resize(L);
  for (int l = 0; l < L; ++l) {
    c.pre[l].resize(w, P);
    c.h[l].resize(w, P);
  }
  c.b_out.resize(6, P);

  // Column-at-a-time evaluation keeps batched results identical to
  // per-point calls.
  for_each_chunk(P, workers, [&](int, int begin, int end) {
    for (int p = begin; p < end; ++p) {
      VecX prev = c.mod.a.segment(0, 3).cwiseProduct(c.x_norm.col(p));
      for (int l = 0; l < L; ++l) {
        if (l > 0)
          prev = c.mod.a.segment(3 + (l - 1) * w, w).cwiseProduct(c.h[l - 1].col(p));
        c.pre[l].col(p) = trunk_w_[l].value * prev + trunk_b_[l].value.col(0);
        c.h[l].col(p) = (cfg_.omega0 * c.pre[l].col(p)).array().sin().matrix();
      }
      c.b_out.col(p) = out_w_.value * c.h[L - 1].col(p) + out_b_.value.col(0);
    }
  });
  if (!c.b_out.allFinite())
    throw NumericError("non-finite actuation network output");
  return c;
}

void Field::backward_actuation(const ActCache& c, const MatX& grad_b,
                               VecX& grad_z, int workers) {
  check_fresh(c.version);
  const int P = c.points();
  const int w = cfg_.width;
  const int L = cfg_.trunk_layers;
  if (grad_b.rows() != 6 || grad_b.cols() != P)
    throw ConfigError("grad_b shape mismatch in backward_actuation");

  struct Part {
    MatX gout_w;
    VecX gout_b;
    std::vector<MatX> gw;
    std::vector<VecX> gb;
    VecX ga;
  };
  std::vector<Part> parts(num_chunks(P));

  for_each_chunk(P, workers, [&](int chunk, int begin, int end) {
    Part& pt = parts[chunk];
    const int len = end - begin;
    pt.gout_w.setZero(6, w);
    pt.gout_b.setZero(6);
    pt.gw.resize(L);
    pt.gb.resize(L);
    for (int l = 0; l < L; ++l) {
      pt.gw[l].setZero(w, l == 0 ? 3 : w);
      pt.gb[l].setZero(w);
    }
    pt.ga.setZero(cfg_.mod_dim());

    const MatX gB = grad_b.middleCols(begin, len);
    pt.gout_w = gB * c.h[L - 1].middleCols(begin, len).transpose();
    pt.gout_b = gB.rowwise().sum();
    MatX gh = out_w_.value.transpose() * gB;

    for (int l = L - 1; l >= 0; --l) {
      const MatX gpre =
          (gh.array() *
           (cfg_.omega0 *
            (cfg_.omega0 * c.pre[l].middleCols(begin, len)).array().cos()))
              .matrix();
      const int off = l == 0 ? 0 : 3 + (l - 1) * w;
      const int dim = l == 0 ? 3 : w;
      const auto input = (l == 0 ? c.x_norm : c.h[l - 1]).middleCols(begin, len);
      const MatX am = c.mod.a.segment(off, dim).asDiagonal() * input;
      pt.gw[l] = gpre * am.transpose();
      pt.gb[l] = gpre.rowwise().sum();
      const MatX gam = trunk_w_[l].value.transpose() * gpre;
      pt.ga.segment(off, dim) =
          (gam.array() * input.array()).rowwise().sum().matrix();
      if (l > 0) gh = c.mod.a.segment(off, dim).asDiagonal() * gam;
    }
  });

  VecX ga = VecX::Zero(cfg_.mod_dim());
  for (const Part& pt : parts) {
    if (pt.gout_w.size() == 0) continue;  // empty batch
    out_w_.grad += pt.gout_w;
    out_b_.grad.col(0) += pt.gout_b;
    for (int l = 0; l < L; ++l) {
      trunk_w_[l].grad += pt.gw[l];
      trunk_b_[l].grad.col(0) += pt.gb[l];
    }
    ga += pt.ga;
  }

  // Modulation path, once per shape.
  mod_w1_.grad += ga * c.mod.mod_h.transpose();
  mod_b1_.grad.col(0) += ga;
  const VecX ghm = mod_w1_.value.transpose() * ga;
  const VecX gmp =
      ghm.cwiseProduct(leaky_d_vec(c.mod.mod_pre, cfg_.leaky_slope));
  mod_w0_.grad += gmp * c.mod.z_eff.transpose();
  mod_b0_.grad.col(0) += gmp;
  const VecX gz_eff = mod_w0_.value.transpose() * gmp;

  if (c.mod.has_res) {
    const VecX g2 = gz_eff;
    res_w2_.grad += g2 * c.mod.res_h1.transpose();
    res_b2_.grad.col(0) += g2;
    const VecX gh1 = res_w2_.value.transpose() * g2;
    const VecX gp1 =
        gh1.cwiseProduct(leaky_d_vec(c.mod.res_pre1, cfg_.leaky_slope));
    res_w1_.grad += gp1 * c.mod.res_h0.transpose();
    res_b1_.grad.col(0) += gp1;
    const VecX gh0 = res_w1_.value.transpose() * gp1;
    const VecX gp0 =
        gh0.cwiseProduct(leaky_d_vec(c.mod.res_pre0, cfg_.leaky_slope));
    res_w0_.grad += gp0 * c.mod.pe.transpose();
    res_b0_.grad.col(0) += gp0;
  }
  grad_z += gz_eff;
}

Field::EncCache Field::encode(const VecX& descriptor) const {
  if (descriptor.size() != cfg_.descriptor_dim)
    throw ConfigError("descriptor size mismatch in encode");
  EncCache c;
  c.version = version_;
  c.desc = descriptor;
  c.pre0 = enc_w0_.value * c.desc + enc_b0_.value.col(0);
  c.h0 = leaky_vec(c.pre0, cfg_.leaky_slope);
  c.pre1 = enc_w1_.value * c.h0 + enc_b1_.value.col(0);
  c.h1 = leaky_vec(c.pre1, cfg_.leaky_slope);
  c.z = enc_w2_.value * c.h1 + enc_b2_.value.col(0);
  return c;
}

void Field::backward_encode(const EncCache& c, const VecX& grad_z) {
  check_fresh(c.version);
  enc_w2_.grad += grad_z * c.h1.transpose();
  enc_b2_.grad.col(0) += grad_z;
  const VecX gh1 = enc_w2_.value.transpose() * grad_z;
  const VecX gp1 = gh1.cwiseProduct(leaky_d_vec(c.pre1, cfg_.leaky_slope));
  enc_w1_.grad += gp1 * c.h0.transpose();
  enc_b1_.grad.col(0) += gp1;
  const VecX gh0 = enc_w1_.value.transpose() * gp1;
  const VecX gp0 = gh0.cwiseProduct(leaky_d_vec(c.pre0, cfg_.leaky_slope));
  enc_w0_.grad += gp0 * c.desc.transpose();
  enc_b0_.grad.col(0) += gp0;
}

Field::JawCache Field::eval_jaw(const VecX& z) const {
  if (z.size() != cfg_.latent_dim)
    throw ConfigError("latent size mismatch in eval_jaw");
  JawCache c;
  c.version = version_;
  c.z = z;
  c.pre0 = jaw_w0_.value * z + jaw_b0_.value.col(0);
  c.h0 = leaky_vec(c.pre0, cfg_.leaky_slope);
  c.pre1 = jaw_w1_.value * c.h0 + jaw_b1_.value.col(0);
  c.h1 = leaky_vec(c.pre1, cfg_.leaky_slope);
  c.theta = jaw_w2_.value * c.h1 + jaw_b2_.value.col(0);
  return c;
}

void Field::backward_jaw(const JawCache& c, const Vec5& grad_theta,
                         VecX& grad_z) {
  check_fresh(c.version);
  jaw_w2_.grad += grad_theta * c.h1.transpose();
  jaw_b2_.grad.col(0) += grad_theta;
  const VecX gh1 = jaw_w2_.value.transpose() * grad_theta;
  const VecX gp1 = gh1.cwiseProduct(leaky_d_vec(c.pre1, cfg_.leaky_slope));
  jaw_w1_.grad += gp1 * c.h0.transpose();
  jaw_b1_.grad.col(0) += gp1;
  const VecX gh0 = jaw_w1_.value.transpose() * gp1;
  const VecX gp0 = gh0.cwiseProduct(leaky_d_vec(c.pre0, cfg_.leaky_slope));
  jaw_w0_.grad += gp0 * c.z.transpose();
  jaw_b0_.grad.col(0) += gp0;
  grad_z += jaw_w0_.value.transpose() * gp0;
}

namespace {

void write_blob(const std::string& path, const MatX& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write blob: " + path);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw IoError("short write: " + path);
}

void read_blob(const std::string& path, MatX& m) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open blob: " + path);
  const auto bytes = static_cast<int64_t>(in.tellg());
  if (bytes != static_cast<int64_t>(m.size() * sizeof(double)))
    throw IoError("blob size mismatch: " + path);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(m.data()), bytes);
  if (!in) throw IoError("short read: " + path);
}

}  // namespace

void Field::save_checkpoint(const std::string& dir, int64_t adam_t,
                            const std::vector<const Tensor*>& extra) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(cfg_.to_json());
  manifest["adam_t"] = adam_t;

  auto record = [&](const Tensor& t, nlohmann::json& list) {
    list.push_back({{"name", t.name},
                    {"rows", t.value.rows()},
                    {"cols", t.value.cols()}});
    write_blob(dir + "/" + t.name + ".bin", t.value);
    write_blob(dir + "/" + t.name + ".m.bin", t.adam_m);
    write_blob(dir + "/" + t.name + ".v.bin", t.adam_v);
  };
  auto& list = manifest["tensors"] = nlohmann::json::array();
  for (const Tensor* t : tensors()) record(*t, list);
  auto& elist = manifest["extra_tensors"] = nlohmann::json::array();
  for (const Tensor* t : extra) record(*t, elist);

  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir);
  out << manifest.dump(1) << "\n";
}

int64_t Field::load_checkpoint(const std::string& dir,
                               const std::vector<Tensor*>& extra) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw IoError("cannot open checkpoint manifest in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw IoError("checkpoint manifest parse failure: " + std::string(e.what()));
  }
  const FieldConfig saved =
      FieldConfig::from_json(manifest.at("config").dump());
  if (!(saved == cfg_))
    throw ConfigError("checkpoint config does not match field config");

  auto restore = [&](Tensor& t, const nlohmann::json& entry) {
    const auto rows = entry.at("rows").get<int64_t>();
    const auto cols = entry.at("cols").get<int64_t>();
    if (rows != t.value.rows() || cols != t.value.cols()) {
      t.value.setZero(rows, cols);
      t.grad.setZero(rows, cols);
      t.adam_m.setZero(rows, cols);
      t.adam_v.setZero(rows, cols);
    }
    read_blob(dir + "/" + t.name + ".bin", t.value);
    read_blob(dir + "/" + t.name + ".m.bin", t.adam_m);
    read_blob(dir + "/" + t.name + ".v.bin", t.adam_v);
  };

  auto own = tensors();
  const auto& list = manifest.at("tensors");
  if (list.size() != own.size())
    throw ConfigError("checkpoint tensor count mismatch");
  for (size_t i = 0; i < own.size(); ++i) {
    if (list.at(i).at("name").get<std::string>() != own[i]->name)
      throw ConfigError("checkpoint tensor order mismatch at " + own[i]->name);
    restore(*own[i], list.at(i));
  }
  const auto& elist = manifest.at("extra_tensors");
  if (elist.size() != extra.size())
    throw ConfigError("checkpoint extra tensor count mismatch");
  for (size_t i = 0; i < extra.size(); ++i) {
    extra[i]->name = elist.at(i).at("name").get<std::string>();
    restore(*extra[i], elist.at(i));
  }
  bump_version();
  return manifest.at("adam_t").get<int64_t>();
}

}  // namespace softact
