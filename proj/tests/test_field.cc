#include "doctest.h"

#include <filesystem>
#include <random>

#include "oracles.hh"
#include "softact/field.hh"

using namespace softact;

namespace {

FieldConfig small_config() {
  FieldConfig cfg;
  cfg.width = 8;
  cfg.trunk_layers = 3;
  cfg.latent_dim = 4;
  cfg.mod_hidden = 6;
  cfg.encoder_hidden = 5;
  cfg.descriptor_dim = 4;
  cfg.jaw_hidden = 5;
  cfg.res_hidden = 6;
  cfg.domain_lo = Vec3(0.0, 0.0, 0.0);
  cfg.domain_hi = Vec3(2.0, 1.0, 0.5);
  return cfg;
}

Tensor* find_tensor(Field& f, const std::string& name) {
  for (Tensor* t : f.tensors())
    if (t->name == name) return t;
  REQUIRE(false);
  return nullptr;
}

void randomize_all(Field& f, uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  for (Tensor* t : f.tensors()) {
    const bool trunk_w = t->name.rfind("trunk.w", 0) == 0;
    std::normal_distribution<double> nd(0.0, trunk_w ? 0.05 : scale);
    for (int64_t i = 0; i < t->value.size(); ++i) t->value.data()[i] = nd(rng);
  }
  f.bump_version();
}

std::vector<Vec3> domain_points(const FieldConfig& cfg, int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts)
    for (int d = 0; d < 3; ++d)
      p(d) = cfg.domain_lo(d) +
             ud(rng) * (cfg.domain_hi(d) - cfg.domain_lo(d));
  return pts;
}

// L = sum(gB .* b_out); checks accumulated parameter and latent grads
// against central differences of the forward pass
void check_actuation_grads(Field& f, const std::vector<Vec3>& pts,
                           const VecX& z, const double* res, const MatX& gB,
                           uint64_t seed) {
  auto loss = [&]() {
    return (gB.array() * f.eval_actuation(pts, z, res).b_out.array()).sum();
  };
  f.zero_grads();
  VecX gz = VecX::Zero(z.size());
  Field::ActCache cache = f.eval_actuation(pts, z, res);
  f.backward_actuation(cache, gB, gz);

  const double h = 1e-6;
  std::mt19937_64 rng(seed);
  std::vector<double> got, want;
  for (Tensor* t : f.tensors()) {
    std::uniform_int_distribution<int64_t> pick(0, t->value.size() - 1);
    for (int k = 0; k < 4; ++k) {
      const int64_t i = pick(rng);
      const double saved = t->value.data()[i];
      t->value.data()[i] = saved + h;
      const double lp = loss();
      t->value.data()[i] = saved - h;
      const double lm = loss();
      t->value.data()[i] = saved;
      got.push_back(t->grad.data()[i]);
      want.push_back((lp - lm) / (2.0 * h));
    }
  }
  VecX gv = Eigen::Map<VecX>(got.data(), got.size());
  VecX wv = Eigen::Map<VecX>(want.data(), want.size());
  CHECK(oracles::rel_err(gv, wv) < 1e-6);

  VecX gz_fd(z.size());
  for (int i = 0; i < z.size(); ++i) {
    VecX z2 = z;
    z2(i) += h;
    const double lp = (gB.array() * f.eval_actuation(pts, z2, res).b_out.array()).sum();
    z2(i) -= 2.0 * h;
    const double lm = (gB.array() * f.eval_actuation(pts, z2, res).b_out.array()).sum();
    gz_fd(i) = (lp - lm) / (2.0 * h);
  }
  CHECK(oracles::rel_err(gz, gz_fd) < 1e-6);
}

}  // namespace

TEST_CASE("construction is deterministic and starts at identity actuation") {
  FieldConfig cfg = small_config();
  Field f(cfg, 9001), g(cfg, 9001);
  auto ft = f.tensors(), gt = g.tensors();
  REQUIRE(ft.size() == gt.size());
  for (size_t i = 0; i < ft.size(); ++i) {
    CHECK(ft[i]->name == gt[i]->name);
    CHECK((ft[i]->value.array() == gt[i]->value.array()).all());
  }

  std::vector<Vec3> pts = domain_points(cfg, 7, 1);
  VecX z = VecX::LinSpaced(cfg.latent_dim, -1.0, 1.0);
  Field::ActCache c = f.eval_actuation(pts, z, nullptr);
  CHECK((c.mod.a.array() == 1.0).all());
  CHECK((c.b_out.array() == 0.0).all());
  Field::JawCache jc = f.eval_jaw(z);
  CHECK((jc.theta.array() == 0.0).all());
}

TEST_CASE("zero modulation output reproduces the plain sine network bitwise") {
  FieldConfig cfg = small_config();
  Field f(cfg, 17);
  std::mt19937_64 rng(18);
  std::normal_distribution<double> nd(0.0, 0.7);
  for (const char* name : {"trunk.out_w", "trunk.out_b", "mod.w0", "mod.b0"}) {
    Tensor* t = find_tensor(f, name);
    for (int64_t i = 0; i < t->value.size(); ++i) t->value.data()[i] = nd(rng);
  }
  f.bump_version();

  std::vector<Vec3> pts = domain_points(cfg, 9, 2);
  VecX z(cfg.latent_dim);
  for (int i = 0; i < z.size(); ++i) z(i) = nd(rng);
  Field::ActCache c = f.eval_actuation(pts, z, nullptr);
  CHECK((c.mod.a.array() == 1.0).all());

  const Vec3 span = cfg.domain_hi - cfg.domain_lo;
  MatX w0 = find_tensor(f, "trunk.w0")->value;
  MatX w1 = find_tensor(f, "trunk.w1")->value;
  MatX w2 = find_tensor(f, "trunk.w2")->value;
  VecX b0 = find_tensor(f, "trunk.b0")->value.col(0);
  VecX b1 = find_tensor(f, "trunk.b1")->value.col(0);
  VecX b2 = find_tensor(f, "trunk.b2")->value.col(0);
  MatX ow = find_tensor(f, "trunk.out_w")->value;
  VecX ob = find_tensor(f, "trunk.out_b")->value.col(0);
  for (size_t p = 0; p < pts.size(); ++p) {
    VecX x =
        (2.0 * (pts[p] - cfg.domain_lo).array() / span.array() - 1.0).matrix();
    VecX h0 = (cfg.omega0 * (w0 * x + b0)).array().sin().matrix();
    VecX h1 = (cfg.omega0 * (w1 * h0 + b1)).array().sin().matrix();
    VecX h2 = (cfg.omega0 * (w2 * h1 + b2)).array().sin().matrix();
    VecX out = ow * h2 + ob;
    CHECK((c.b_out.col(p).array() == out.array()).all());
  }
}

TEST_CASE("batched and multi-worker evaluation is bitwise stable") {
  FieldConfig cfg = small_config();
  Field f(cfg, 23);
  randomize_all(f, 24, 0.4);
  std::vector<Vec3> pts = domain_points(cfg, 13, 3);
  VecX z = VecX::LinSpaced(cfg.latent_dim, -0.5, 0.8);
  const double rho = 27.0;

  Field::ActCache all = f.eval_actuation(pts, z, &rho);
  Field::ActCache all4 = f.eval_actuation(pts, z, &rho, 4);
  CHECK((all.b_out.array() == all4.b_out.array()).all());
  for (size_t p = 0; p < pts.size(); ++p) {
    Field::ActCache one = f.eval_actuation({pts[p]}, z, &rho);
    CHECK((one.b_out.col(0).array() == all.b_out.col(p).array()).all());
  }

  MatX gB(6, static_cast<int>(pts.size()));
  std::mt19937_64 rng(25);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int64_t i = 0; i < gB.size(); ++i) gB.data()[i] = nd(rng);

  f.zero_grads();
  VecX gz1 = VecX::Zero(z.size());
  f.backward_actuation(all, gB, gz1, 1);
  std::vector<MatX> grads1;
  for (Tensor* t : f.tensors()) grads1.push_back(t->grad);

  f.zero_grads();
  VecX gz3 = VecX::Zero(z.size());
  f.backward_actuation(all, gB, gz3, 3);
  auto ts = f.tensors();
  for (size_t i = 0; i < ts.size(); ++i)
    CHECK((ts[i]->grad.array() == grads1[i].array()).all());
  CHECK((gz1.array() == gz3.array()).all());
}

TEST_CASE("actuation backward matches finite differences") {
  FieldConfig cfg = small_config();
  Field f(cfg, 31);
  randomize_all(f, 32, 0.5);
  std::vector<Vec3> pts = domain_points(cfg, 5, 4);
  VecX z(cfg.latent_dim);
  std::mt19937_64 rng(33);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < z.size(); ++i) z(i) = nd(rng);
  MatX gB(6, static_cast<int>(pts.size()));
  for (int64_t i = 0; i < gB.size(); ++i) gB.data()[i] = nd(rng);

  SUBCASE("without the resolution branch") {
    check_actuation_grads(f, pts, z, nullptr, gB, 34);
  }
  SUBCASE("with the resolution branch") {
    const double rho = 8.0;
    check_actuation_grads(f, pts, z, &rho, gB, 35);
  }
}

TEST_CASE("zero-initialized resolution branch leaves the latent untouched") {
  FieldConfig cfg = small_config();
  Field f(cfg, 41);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (const char* name : {"trunk.out_w", "trunk.out_b", "mod.w1", "mod.b1"}) {
    Tensor* t = find_tensor(f, name);
    for (int64_t i = 0; i < t->value.size(); ++i) t->value.data()[i] = nd(rng);
  }
  f.bump_version();

  std::vector<Vec3> pts = domain_points(cfg, 6, 5);
  VecX z = VecX::LinSpaced(cfg.latent_dim, -1.0, 0.5);
  const double rho = 8.0;
  Field::ActCache with_res = f.eval_actuation(pts, z, &rho);
  Field::ActCache without = f.eval_actuation(pts, z, nullptr);
  CHECK(with_res.mod.has_res);
  CHECK((with_res.mod.z_eff.array() == z.array()).all());
  CHECK((with_res.b_out.array() == without.b_out.array()).all());

  // once the branch carries weight, the sample count matters
  randomize_all(f, 43, 0.5);
  const double rho_a = 8.0, rho_b = 64.0;
  Field::ActCache ca = f.eval_actuation(pts, z, &rho_a);
  Field::ActCache cb = f.eval_actuation(pts, z, &rho_b);
  CHECK((ca.mod.z_eff - z).norm() > 0.0);
  CHECK((ca.b_out - cb.b_out).norm() > 0.0);
}

TEST_CASE("encoder backward matches finite differences") {
  FieldConfig cfg = small_config();
  Field f(cfg, 51);
  randomize_all(f, 52, 0.5);
  std::mt19937_64 rng(53);
  std::normal_distribution<double> nd(0.0, 1.0);
  VecX desc(cfg.descriptor_dim);
  for (int i = 0; i < desc.size(); ++i) desc(i) = nd(rng);
  VecX gz(cfg.latent_dim);
  for (int i = 0; i < gz.size(); ++i) gz(i) = nd(rng);

  f.zero_grads();
  Field::EncCache cache = f.encode(desc);
  f.backward_encode(cache, gz);

  auto loss = [&]() { return gz.dot(f.encode(desc).z); };
  const double h = 1e-6;
  std::vector<double> got, want;
  for (Tensor* t : f.tensors()) {
    std::uniform_int_distribution<int64_t> pick(0, t->value.size() - 1);
    for (int k = 0; k < 4; ++k) {
      const int64_t i = pick(rng);
      const double saved = t->value.data()[i];
      t->value.data()[i] = saved + h;
      const double lp = loss();
      t->value.data()[i] = saved - h;
      const double lm = loss();
      t->value.data()[i] = saved;
      got.push_back(t->grad.data()[i]);
      want.push_back((lp - lm) / (2.0 * h));
    }
  }
  VecX gv = Eigen::Map<VecX>(got.data(), got.size());
  VecX wv = Eigen::Map<VecX>(want.data(), want.size());
  CHECK(oracles::rel_err(gv, wv) < 1e-6);
}

TEST_CASE("jaw head backward matches finite differences") {
  FieldConfig cfg = small_config();
  Field f(cfg, 61);
  randomize_all(f, 62, 0.5);
  std::mt19937_64 rng(63);
  std::normal_distribution<double> nd(0.0, 1.0);
  VecX z(cfg.latent_dim);
  for (int i = 0; i < z.size(); ++i) z(i) = nd(rng);
  Vec5 gt;
  for (int i = 0; i < 5; ++i) gt(i) = nd(rng);

  f.zero_grads();
  VecX gz = VecX::Zero(cfg.latent_dim);
  Field::JawCache cache = f.eval_jaw(z);
  f.backward_jaw(cache, gt, gz);

  auto loss = [&](const VecX& zz) { return gt.dot(f.eval_jaw(zz).theta); };
  const double h = 1e-6;
  std::vector<double> got, want;
  for (Tensor* t : f.tensors()) {
    std::uniform_int_distribution<int64_t> pick(0, t->value.size() - 1);
    for (int k = 0; k < 4; ++k) {
      const int64_t i = pick(rng);
      const double saved = t->value.data()[i];
      t->value.data()[i] = saved + h;
      const double lp = loss(z);
      t->value.data()[i] = saved - h;
      const double lm = loss(z);
      t->value.data()[i] = saved;
      got.push_back(t->grad.data()[i]);
      want.push_back((lp - lm) / (2.0 * h));
    }
  }
  VecX gv = Eigen::Map<VecX>(got.data(), got.size());
  VecX wv = Eigen::Map<VecX>(want.data(), want.size());
  CHECK(oracles::rel_err(gv, wv) < 1e-6);

  VecX gz_fd(z.size());
  for (int i = 0; i < z.size(); ++i) {
    VecX z2 = z;
    z2(i) += h;
    const double lp = loss(z2);
    z2(i) -= 2.0 * h;
    const double lm = loss(z2);
    gz_fd(i) = (lp - lm) / (2.0 * h);
  }
  CHECK(oracles::rel_err(gz, gz_fd) < 1e-6);
}

TEST_CASE("rigid jaw transform composes rotations about the pivot") {
  Vec5 theta;
  theta << 0.3, -0.2, 0.05, -0.1, 0.2;
  const Vec3 pivot(0.5, -1.0, 2.0);
  RigidTransform T = jaw_transform(theta, pivot);

  CHECK((T.R * T.R.transpose() - Mat3::Identity()).norm() < 1e-14);
  CHECK(T.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((T.apply(pivot) - (pivot + theta.segment<3>(2))).norm() < 1e-15);

  Vec5 zero = Vec5::Zero();
  RigidTransform I = jaw_transform(zero, pivot);
  const Vec3 probe(1.0, 2.0, 3.0);
  CHECK((I.apply(probe) - probe).norm() == 0.0);

  // jacobian of the transformed point against finite differences
  const Vec3 x(1.3, 0.2, -0.7);
  auto J = jaw_point_jacobian(theta, pivot, x);
  const double h = 1e-7;
  for (int j = 0; j < 5; ++j) {
    Vec5 tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    Vec3 col = (jaw_transform(tp, pivot).apply(x) -
                jaw_transform(tm, pivot).apply(x)) /
               (2.0 * h);
    CHECK((J.col(j) - col).norm() < 1e-7);
  }
}

TEST_CASE("stale forward caches are rejected after parameter updates") {
  FieldConfig cfg = small_config();
  Field f(cfg, 71);
  randomize_all(f, 72, 0.4);
  std::vector<Vec3> pts = domain_points(cfg, 3, 6);
  VecX z = VecX::Zero(cfg.latent_dim);

  Field::ActCache ac = f.eval_actuation(pts, z, nullptr);
  Field::EncCache ec = f.encode(VecX::Zero(cfg.descriptor_dim));
  Field::JawCache jc = f.eval_jaw(z);
  f.bump_version();

  MatX gB = MatX::Ones(6, 3);
  VecX gz = VecX::Zero(cfg.latent_dim);
  CHECK_THROWS_WITH_AS(f.backward_actuation(ac, gB, gz),
                       doctest::Contains("stale"), NumericError);
  CHECK_THROWS_AS(f.backward_encode(ec, VecX::Zero(cfg.latent_dim)),
                  NumericError);
  CHECK_THROWS_AS(f.backward_jaw(jc, Vec5::Zero(), gz), NumericError);
}

TEST_CASE("checkpoints round trip bit exactly") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "softact_field_ckpt").string();
  fs::remove_all(dir);

  FieldConfig cfg = small_config();
  Field f(cfg, 81);
  randomize_all(f, 82, 0.5);
  std::mt19937_64 rng(83);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Tensor* t : f.tensors()) {
    for (int64_t i = 0; i < t->value.size(); ++i) {
      t->adam_m.data()[i] = nd(rng);
      t->adam_v.data()[i] = std::abs(nd(rng));
    }
  }
  Tensor extra;
  extra.init("latent.table", cfg.latent_dim, 3);
  for (int64_t i = 0; i < extra.value.size(); ++i) extra.value.data()[i] = nd(rng);
  f.save_checkpoint(dir, 1234, {&extra});

  Field g(cfg, 999);
  Tensor extra2;
  extra2.init("placeholder", 1, 1);
  const int64_t t_loaded = g.load_checkpoint(dir, {&extra2});
  CHECK(t_loaded == 1234);
  CHECK(extra2.name == "latent.table");
  CHECK((extra2.value.array() == extra.value.array()).all());

  auto ft = f.tensors();
  auto gt = g.tensors();
  for (size_t i = 0; i < ft.size(); ++i) {
    CHECK((ft[i]->value.array() == gt[i]->value.array()).all());
    CHECK((ft[i]->adam_m.array() == gt[i]->adam_m.array()).all());
    CHECK((ft[i]->adam_v.array() == gt[i]->adam_v.array()).all());
  }

  std::vector<Vec3> pts = domain_points(cfg, 6, 7);
  VecX z = VecX::LinSpaced(cfg.latent_dim, -0.3, 0.9);
  const double rho = 13.0;
  Field::ActCache ca = f.eval_actuation(pts, z, &rho);
  Field::ActCache cb = g.eval_actuation(pts, z, &rho);
  CHECK((ca.b_out.array() == cb.b_out.array()).all());

  FieldConfig other = cfg;
  other.width = 16;
  Field h(other, 1);
  CHECK_THROWS_AS(h.load_checkpoint(dir), ConfigError);
  Field fresh(cfg, 1);
  CHECK_THROWS_AS(fresh.load_checkpoint(dir + "_missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("invalid field configurations and inputs are rejected") {
  FieldConfig bad = small_config();
  bad.width = 0;
  CHECK_THROWS_AS(Field(bad, 1), ConfigError);
  bad = small_config();
  bad.pe_dim = 3;
  CHECK_THROWS_AS(Field(bad, 1), ConfigError);

  FieldConfig cfg = small_config();
  Field f(cfg, 1);
  std::vector<Vec3> pts = domain_points(cfg, 2, 8);
  CHECK_THROWS_AS(f.eval_actuation(pts, VecX::Zero(cfg.latent_dim + 1), nullptr),
                  ConfigError);
  CHECK_THROWS_AS(f.encode(VecX::Zero(cfg.descriptor_dim + 2)), ConfigError);
  CHECK_THROWS_AS(f.eval_jaw(VecX::Zero(1)), ConfigError);

  Field::ActCache c = f.eval_actuation(pts, VecX::Zero(cfg.latent_dim), nullptr);
  VecX gz = VecX::Zero(cfg.latent_dim);
  CHECK_THROWS_AS(f.backward_actuation(c, MatX::Zero(6, 99), gz), ConfigError);

  FieldConfig degenerate = small_config();
  degenerate.domain_hi = degenerate.domain_lo;
  Field d(degenerate, 1);
  CHECK_THROWS_AS(
      d.eval_actuation(pts, VecX::Zero(degenerate.latent_dim), nullptr),
      ConfigError);
}
