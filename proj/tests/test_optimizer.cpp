// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "doctest.h"
#include "oracles.hpp"

#include "msplat/errors.hpp"
#include "msplat/losses.hpp"
#include "msplat/metrics.hpp"
#include "msplat/optimizer.hpp"
#include "msplat/synth.hpp"

#include <random>

using namespace msplat;

namespace {

Image noise_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Image img(w, h, c);
  for (auto& v : img.data) v = U(rng);
  return img;
}

// Two rigid groups of points on the plane z = 4, translating in opposite
// directions along x, seen by a fixed camera with exact depth.
SceneDataset planted(std::size_t F, double speed, std::vector<int>& labels,
                     std::vector<Vec3>& canonical) {
  SceneDataset d;
  TrajectoryParams tp;
  tp.frames = static_cast<int>(F);
  tp.intrinsics = {80, 80, 40, 30, 80, 60};
  tp.radius = 1.0;
  tp.target = Vec3(0, 0, 1);
  d.trajectory = make_trajectory(TrajectoryKind::Static, tp);
  d.trajectory.poses.assign(F, Extrinsics{});
  const std::size_t t0 = canonical_frame(F);
  std::vector<Vec3> pts;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 12; ++i) {
      const double x = (g == 0 ? -1.2 : 0.6) + 0.1 * (i % 4);
      const double y = -0.4 + 0.15 * (i / 4);
      pts.emplace_back(x, y, 4.0);
      labels.push_back(g);
    }
  }
  canonical = pts;
  d.tracks = TrackSet(pts.size(), F);
  for (std::size_t t = 0; t < F; ++t) {
    d.frames.emplace_back(80, 60, 3, 0.5);
    d.depths.emplace_back(80, 60, 1, 4.0);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      const double dx = (labels[q] == 0 ? 1.0 : -1.0) * speed * (static_cast<double>(t) - t0);
      const auto p = project_point(pts[q] + Vec3(dx, 0, 0), d.trajectory.intrinsics, Extrinsics{});
      d.tracks.position(q, t) = p.pixel;
      d.tracks.set_visible(q, t, true);
    }
  }
  return d;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr closed forms") {
  Image a(8, 8, 3, 0.0), b(8, 8, 3, 0.1);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, b) == doctest::Approx(20.0));
  CHECK(ssim(b, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)psnr(a, Image(4, 4, 3)), InvalidArgument);
  CHECK_THROWS_AS((void)ssim(a, Image(8, 8, 1)), InvalidArgument);
}

TEST_CASE("ssim matches the scalar loop") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 3; ++trial) {
    const Image a = noise_image(rng, 19, 14, 3), b = noise_image(rng, 19, 14, 3);
    CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
  }
}

TEST_CASE("ssim gradient matches central differences") {
  std::mt19937_64 rng(43);
  Image a = noise_image(rng, 12, 10, 1);
  const Image b = noise_image(rng, 12, 10, 1);
  const auto g = ssim_with_gradient(a, b);
  for (std::size_t k = 0; k < a.data.size(); k += 7) {
    const double o = a.data[k];
    a.data[k] = o + 1e-6;
    const double p = ssim(a, b);
    a.data[k] = o - 1e-6;
    const double m = ssim(a, b);
    a.data[k] = o;
    CHECK(g.gradient.data[k] == doctest::Approx((p - m) / 2e-6).epsilon(1e-5).scale(1e-3));
  }
}

}  // TEST_SUITE

TEST_SUITE("losses") {

TEST_CASE("coefficient penalty arithmetic") {
  MotionModel m(1, 1, 15);
  for (std::size_t b = 0; b < 6; ++b) m.coeff(0, 0, b) = 1.0;
  CHECK(coeff_regularizer(m, 0.8, 1.0, nullptr) == doctest::Approx(4.8));

  // Monotone in every coefficient magnitude.
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  MotionModel r(3, 4, 9);
  for (auto& c : r.coeffs()) c = U(rng);
  const double base = coeff_regularizer(r, 0.8, 1.0, nullptr);
  for (std::size_t k = 0; k < r.coeffs().size(); ++k) {
    MotionModel bigger = r;
    bigger.coeffs()[k] *= 1.1;
    CHECK(coeff_regularizer(bigger, 0.8, 1.0, nullptr) > base);
  }
}

TEST_CASE("regularizers match scalar loops and their gradients") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  MotionModel m(4, 5, 9);
  for (auto& c : m.coeffs()) c = U(rng);
  double lc = 0.0, ls = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t b = 0; b < 9; ++b) {
        const double c = m.coeff(i, t, b);
        lc += (b < 6 ? 0.8 : 0.2) * c * c;
        if (t + 1 < 5) ls += std::pow(m.coeff(i, t + 1, b) - c, 2);
      }
    }
  }
  std::vector<double> g(m.coeffs().size(), 0.0);
  CHECK(coeff_regularizer(m, 0.8, 0.1, &g) == doctest::Approx(0.1 * lc / 20.0).epsilon(1e-12));
  CHECK(smoothness_regularizer(m, 0.3, &g) == doctest::Approx(0.3 * ls / 16.0).epsilon(1e-12));
  for (std::size_t k = 0; k < g.size(); k += 5) {
    auto f = [&](double delta) {
      MotionModel p = m;
      p.coeffs()[k] += delta;
      return coeff_regularizer(p, 0.8, 0.1, nullptr) + smoothness_regularizer(p, 0.3, nullptr);
    };
    CHECK(g[k] == doctest::Approx((f(1e-6) - f(-1e-6)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("image loss matches a scalar loop") {
  std::mt19937_64 rng(59);
  auto s = oracle::random_scene(rng, 12, 20, 16);
  const auto rt = render(pose_at_time(s.cloud, MotionModel(12, 1, 6), 0), s.camera, Vec3::Zero());
  const Image target = noise_image(rng, 20, 16, 3);
  Image tdepth = noise_image(rng, 20, 16, 1);
  for (auto& v : tdepth.data) v = 2.0 + v;
  tdepth.data[3] = 0.0;  // invalid
  LossConfig cfg;
  const auto out = image_loss(rt, &target, &tdepth, cfg);

  double l1 = 0.0;
  for (std::size_t k = 0; k < target.data.size(); ++k) l1 += std::abs(rt.rgb.data[k] - target.data[k]);
  double dl = 0.0;
  std::size_t valid = 0;
  for (std::size_t p = 0; p < tdepth.data.size(); ++p) {
    const double A = rt.alpha.data[p];
    if (A > 0.5 && tdepth.data[p] > 0.0) {
      dl += std::abs(rt.depth.data[p] / A - tdepth.data[p]);
      ++valid;
    }
  }
  REQUIRE(valid > 0);
  CHECK(out.terms.rgb == doctest::Approx(l1 / target.data.size()).epsilon(1e-12));
  CHECK(out.terms.ssim == doctest::Approx(0.2 * (1.0 - oracle::ssim(rt.rgb, target))).epsilon(1e-9));
  CHECK(out.terms.depth == doctest::Approx(0.5 * dl / valid).epsilon(1e-12));
}

TEST_CASE("perfect reconstruction has zero loss") {
  std::mt19937_64 rng(61);
  auto s = oracle::random_scene(rng, 8, 16, 16);
  MotionModel m(8, 3, 8);
  const auto posed = pose_at_time(s.cloud, m, 1);
  const auto rt = render(posed, s.camera, Vec3::Zero());
  const Image depth = rt.normalized_depth();
  FrameInputs in;
  in.rgb = &rt.rgb;
  in.depth = &depth;
  const auto out = loss(rt, posed, s.camera, in, m, LossConfig{});
  CHECK(out.terms.total == doctest::Approx(0.0).scale(1.0));
  for (double g : out.d_coeffs) CHECK(g == 0.0);
}

TEST_CASE("track loss value and gradients") {
  SynthSpec sp;
  sp.n_gaussians = 60;
  sp.frames = 6;
  sp.width = 48;
  sp.height = 36;
  sp.focal = 45.0;
  sp.queries = 12;
  sp.holdout_views = 0;
  sp.seed = 3;
  const auto sc = synth_scene(sp);
  const auto& d = sc.dataset;
  const std::size_t t0 = canonical_frame(d.frame_count()), t = 5;
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> U(-0.2, 0.2);
  MotionModel m(sc.model.dynamic_count(), d.frame_count(), 8);
  for (auto& c : m.coeffs()) c = U(rng);
  for (auto& b : m.trainable()) b = Twist::from_vector(Vec6::NullaryExpr([&] { return 2 * U(rng); }));
  auto binds = bind_tracks(d.tracks, d.depths, d.trajectory, sc.cloud, m, t0, 4);
  REQUIRE(!binds.empty());
  binds.front().rows.front() = TrackBinding::kStatic;  // exercise the identity path
  const Camera cam = d.trajectory.camera(t);

  // Scalar oracle: blended anchor, pinhole projection, smoothed L2 error.
  double ref = 0.0;
  std::size_t n = 0;
  for (const auto& b : binds) {
    if (!d.tracks.is_visible(b.query, t)) continue;
    Vec3 x = Vec3::Zero();
    for (std::size_t j = 0; j < b.rows.size(); ++j) {
      Mat4 T = Mat4::Identity();
      if (b.rows[j] != TrackBinding::kStatic) {
        Vec6 xi = Vec6::Zero();
        for (std::size_t k = 0; k < 8; ++k) xi += m.coeff(b.rows[j], t, k) * m.basis(k).vector();
        T = oracle::expm_series(oracle::hat(xi));
      }
      x += b.weights[j] * (T.block<3, 3>(0, 0) * b.anchor + T.block<3, 1>(0, 3));
    }
    const Vec2 px = oracle::project(x, cam.intrinsics, cam.extrinsics.pose.matrix());
    const Vec2 r = (px - d.tracks.position(b.query, t)) / 48.0;
    ref += std::sqrt(r.squaredNorm() + 1e-12);
    ++n;
  }
  REQUIRE(n > 0);
  std::vector<double> gc(m.coeffs().size(), 0.0);
  std::vector<Vec6> gb(2, Vec6::Zero());
  const double w = 2.0;
  CHECK(track_loss(m, cam, d.tracks, binds, t, w, &gc, &gb) == doctest::Approx(w * ref / n).epsilon(1e-9));

  auto L = [&](const MotionModel& mm) { return track_loss(mm, cam, d.tracks, binds, t, w, nullptr, nullptr); };
  double worst = 0.0;
  for (std::size_t k = 0; k < gc.size(); ++k) {
    if (gc[k] == 0.0) continue;
    MotionModel p = m, q = m;
    p.coeffs()[k] += 1e-6;
    q.coeffs()[k] -= 1e-6;
    const double fd = (L(p) - L(q)) / 2e-6;
    worst = std::max(worst, std::abs(gc[k] - fd) / std::max({std::abs(fd), std::abs(gc[k]), 1e-4}));
  }
  for (std::size_t j = 0; j < 2; ++j) {
    for (int k = 0; k < 6; ++k) {
      MotionModel p = m, q = m;
      Vec6 v = m.trainable()[j].vector();
      v[k] += 1e-6;
      p.trainable()[j] = Twist::from_vector(v);
      v[k] -= 2e-6;
      q.trainable()[j] = Twist::from_vector(v);
      const double fd = (L(p) - L(q)) / 2e-6;
      worst = std::max(worst, std::abs(gb[j][k] - fd) / std::max({std::abs(fd), std::abs(gb[j][k]), 1e-4}));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("non-finite terms are named") {
  MotionModel m(1, 2, 6);
  m.coeff(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  GaussianCloud cloud;
  cloud.push_back(Gaussian{}, true);
  Camera cam;
  cam.intrinsics = {10, 10, 4, 4, 8, 8};
  PosedCloud posed;
  posed.frame = 1;
  const auto rt = render(posed, cam, Vec3::Zero());
  try {
    (void)loss(rt, posed, cam, FrameInputs{}, m, LossConfig{});
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("'coeff'") != std::string::npos);
  }
}

TEST_CASE("loss config validation") {
  LossConfig c;
  c.lambda_fixed = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = LossConfig{};
  c.w_depth = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

}  // TEST_SUITE

TEST_SUITE("optimizer") {

TEST_CASE("adam") {
  std::vector<double> p = {1.0, -2.0, 3.0};
  const auto before = p;
  AdamState st;
  adam_step(p, std::vector<double>(3, 0.0), st, 0.1, 0.9, 0.999, 1e-15);
  CHECK(p == before);
  CHECK(st.steps == 0);
  // First step moves each parameter by lr against the gradient sign.
  adam_step(p, std::vector<double>{0.5, -4.0, 0.0}, st, 0.1, 0.9, 0.999, 1e-15);
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(p[1] == doctest::Approx(-1.9));
  CHECK(p[2] == 3.0);
  CHECK_THROWS_AS(adam_step(p, std::vector<double>(2, 0.0), st, 0.1, 0.9, 0.999, 1e-15), ContractError);
}

TEST_CASE("default configuration") {
  const FitConfig c;
  CHECK(c.loss.lambda_fixed == 0.8);
  CHECK(c.schedule.basis_count == 15);
  CHECK(c.schedule.init_gaussians == 50000);
  CHECK(c.schedule.lr == 1e-4);
  CHECK(c.schedule.init_iters == 1000);
  CHECK(c.schedule.joint_epochs == 600);
  CHECK(c.schedule.downsample_factor == 0.5);
  CHECK(c.schedule.beta1 == 0.9);
  CHECK(c.schedule.beta2 == 0.999);
  CHECK(canonical_frame(16) == 8);
}

TEST_CASE("config round trip and errors") {
  FitConfig c;
  c.schedule.joint_epochs = 7;
  c.schedule.background = Vec3(0.1, 0.2, 0.3);
  c.loss.w_track = 0.25;
  const auto back = parse_config(serialize_config(c));
  CHECK(serialize_config(back) == serialize_config(c));
  CHECK(back.schedule.background == c.schedule.background);
  CHECK_THROWS_AS((void)parse_config(R"({"schedule": {"epochs": 3}})"), ParseError);
  CHECK_THROWS_AS((void)parse_config(R"({"loss": {"w_rgb": "x"}})"), ParseError);
  CHECK_THROWS_AS((void)parse_config(R"({"schedule": {"basis_count": 4}})").validate(), InvalidArgument);
  // Partial files override only what they name.
  const auto partial = parse_config(R"({"schedule": {"lr": 0.5}})");
  CHECK(partial.schedule.lr == 0.5);
  CHECK(partial.schedule.joint_epochs == 600);
}

TEST_CASE("kmeans separates planted clusters") {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> N(0.0, 0.05);
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < 60; ++i) {
    Eigen::VectorXd v(4);
    const double c = (i % 3) * 2.0;
    v << c + N(rng), -c + N(rng), N(rng), c + N(rng);
    pts.push_back(v);
  }
  const auto res = kmeans(pts, 3, 5);
  for (int i = 3; i < 60; ++i) CHECK(res.labels[i] == res.labels[i % 3]);
  CHECK(res.labels[0] != res.labels[1]);
  CHECK(res.labels[1] != res.labels[2]);
  CHECK(res.labels[0] != res.labels[2]);
  CHECK_THROWS_AS((void)kmeans(pts, 0, 1), InvalidArgument);
  CHECK_THROWS_AS((void)kmeans(std::vector<Eigen::VectorXd>(2, pts[0]), 3, 1), InvalidArgument);
}

TEST_CASE("init_cloud") {
  SceneDataset d;
  TrajectoryParams tp;
  tp.frames = 3;
  tp.intrinsics = {30, 30, 9.5, 7.5, 20, 16};
  d.trajectory = make_trajectory(TrajectoryKind::Static, tp);
  d.trajectory.poses.assign(3, Extrinsics{});
  for (int t = 0; t < 3; ++t) {
    d.frames.emplace_back(20, 16, 3, 0.25);
    d.depths.emplace_back(20, 16, 1, 2.0);
  }
  const auto cloud = init_cloud(d, 100, 0.1, 1);
  CHECK(cloud.size() == 100);
  for (const auto& g : cloud.gaussians) {
    CHECK(g.mean.z() == doctest::Approx(2.0));
    CHECK(g.opacity() == doctest::Approx(0.1));
    CHECK(g.color == Vec3::Constant(0.25));
  }
  CHECK(cloud.dynamic_count() == 100);
  CHECK(init_cloud(d, 100000, 0.1, 1).size() == 320);  // clamped to the pixel count

  d.depths[1] = Image();
  CHECK_THROWS_AS((void)init_cloud(d, 10), ValidationError);
}

TEST_CASE("init_cloud lands on the synthetic surface") {
  SynthSpec sp;
  sp.n_gaussians = 150;
  sp.frames = 4;
  sp.width = 64;
  sp.height = 48;
  sp.focal = 55.0;
  sp.depth_noise = 0.01;
  sp.holdout_views = 0;
  sp.seed = 5;
  const auto sc = synth_scene(sp);
  const std::size_t t0 = canonical_frame(4);
  const auto cloud = init_cloud(sc.dataset, 500, 0.1, 2);
  const Camera cam = sc.dataset.trajectory.camera(t0);
  const auto truth = render(pose_at_time(sc.cloud, sc.model, t0), cam, Vec3::Zero());
  const Image clean = truth.normalized_depth();
  std::size_t near = 0;
  for (const auto& g : cloud.gaussians) {
    const auto p = project_point(g.mean, cam.intrinsics, cam.extrinsics);
    const int x = static_cast<int>(std::lround(p.pixel.x())), y = static_cast<int>(std::lround(p.pixel.y()));
    if (std::abs(p.depth - clean.at(x, y)) <= 2.0 * sp.depth_noise) ++near;
  }
  CHECK(static_cast<double>(near) / cloud.size() >= 0.95);
}

TEST_CASE("init_motion recovers planted clusters") {
  std::vector<int> labels;
  std::vector<Vec3> pts;
  const SceneDataset d = planted(7, 0.05, labels, pts);
  const std::size_t t0 = canonical_frame(7);
  GaussianCloud cloud;
  Vec3 centers[2] = {Vec3::Zero(), Vec3::Zero()};
  for (std::size_t q = 0; q < pts.size(); ++q) centers[labels[q]] += pts[q] / 12.0;
  Gaussian g;
  g.mean = centers[0];
  cloud.push_back(g, true);
  g.mean = centers[1];
  cloud.push_back(g, true);
  g.mean = centers[0] + Vec3(0.3, 0.2, 0.0);
  cloud.push_back(g, true);

  const auto init = init_motion(d, cloud, 8, 3);
  REQUIRE_FALSE(init.fallback);
  REQUIRE(init.track_ids.size() == pts.size());
  const auto& lab = init.clusters.labels;
  for (std::size_t i = 0; i < lab.size(); ++i) {
    CHECK((lab[i] == lab[0]) == (labels[init.track_ids[i]] == labels[init.track_ids[0]]));
  }
  // The coefficients move each centre Gaussian with its group.
  for (std::size_t t = 0; t < 7; ++t) {
    const double dt = static_cast<double>(t) - t0;
    for (int c = 0; c < 2; ++c) {
      const Vec3 moved = compose_motion(init.model.row(c, t), init.model).apply(centers[c]);
      const Vec3 expect = centers[c] + Vec3((c == 0 ? 1.0 : -1.0) * 0.05 * dt, 0, 0);
      CHECK((moved - expect).norm() < 1e-3);
    }
  }
  // A Gaussian on a cluster centre carries that cluster's largest weight.
  const std::size_t cluster0 = 6 + init.clusters.labels[std::distance(
      init.track_ids.begin(), std::find_if(init.track_ids.begin(), init.track_ids.end(),
                                           [&](std::size_t q) { return labels[q] == 0; }))];
  CHECK(std::abs(init.model.coeff(0, 0, cluster0)) >= std::abs(init.model.coeff(2, 0, cluster0)));
  for (std::size_t b = 0; b < 6; ++b) CHECK(init.model.coeff(0, 0, b) == 0.0);
}

TEST_CASE("init_motion on static tracks and too few tracks") {
  std::vector<int> labels;
  std::vector<Vec3> pts;
  const SceneDataset d = planted(5, 0.0, labels, pts);
  GaussianCloud cloud;
  cloud.push_back(Gaussian{}, true);
  const auto init = init_motion(d, cloud, 8, 1);
  for (double c : init.model.coeffs()) CHECK(std::abs(c) < 1e-9);

  SceneDataset few = d;
  few.tracks = TrackSet(3, 5);
  const auto fb = init_motion(few, cloud, 8, 1);
  CHECK(fb.fallback);
  CHECK(fb.warning.find("usable tracks") != std::string::npos);
  for (double c : fb.model.coeffs()) CHECK(c == 0.0);
}

TEST_CASE("fit: one Gaussian recovers a pixel colour") {
  // Geometry frozen, so the loss is convex in the colour alone. The target is
  // rendered from the Gaussian the fit starts from, painted in `target`.
  SceneDataset d;
  d.trajectory.intrinsics = {20, 20, 3.5, 3.5, 8, 8};
  d.trajectory.poses.assign(1, Extrinsics{});
  d.frames.emplace_back(8, 8, 3, 0.5);
  d.depths.emplace_back(8, 8, 1, 2.0);
  d.tracks = TrackSet(0, 1);

  FitConfig cfg;
  cfg.schedule.init_iters = 0;
  cfg.schedule.joint_epochs = 1500;
  cfg.schedule.init_gaussians = 1;
  cfg.schedule.init_opacity = 0.9;
  cfg.schedule.basis_count = 6;
  cfg.schedule.downsample_factor = 1.0;
  cfg.schedule.densify = false;
  cfg.schedule.lr = 1e-3;
  cfg.schedule.lr_scale = {0, 0, 0, 0, 1, 0, 0};
  cfg.schedule.background = Vec3::Constant(0.5);
  cfg.loss.w_ssim = 0.0;
  cfg.loss.w_depth = 0.0;

  const Vec3 target(0.2, 0.6, 0.4);
  GaussianCloud start = init_cloud(d, 1, cfg.schedule.init_opacity, cfg.schedule.seed);
  start.gaussians[0].color = target;
  const Camera cam = d.trajectory.camera(0);
  d.frames[0] = render(pose_at_time(start, MotionModel(start.dynamic_count(), 1, 6), 0), cam,
                       cfg.schedule.background).rgb;

  const auto res = fit(d, cfg);
  REQUIRE(res.cloud.size() == 1);
  const auto rt = render(pose_at_time(res.cloud, res.model, 0), cam, cfg.schedule.background);
  const auto p = project_point(res.cloud.gaussians[0].mean, cam.intrinsics, cam.extrinsics);
  const int x = static_cast<int>(std::lround(p.pixel.x())), y = static_cast<int>(std::lround(p.pixel.y()));
  for (int c = 0; c < 3; ++c) CHECK(std::abs(rt.rgb.at(x, y, c) - d.frames[0].at(x, y, c)) < 1e-3);
  CHECK((res.cloud.gaussians[0].color - target).norm() < 2e-3);
}

TEST_CASE("fit on small synthetic scenes") {
  SynthSpec sp;
  sp.n_gaussians = 40;
  sp.frames = 4;
  sp.width = 32;
  sp.height = 24;
  sp.focal = 30.0;
  sp.queries = 16;
  sp.holdout_views = 1;
  sp.seed = 2;
  FitConfig cfg;
  cfg.schedule.init_iters = 20;
  cfg.schedule.joint_epochs = 6;
  cfg.schedule.init_gaussians = 200;
  cfg.schedule.densify_every = 10;
  cfg.schedule.lr = 1e-3;
  cfg.schedule.seed = 7;

  SUBCASE("deterministic, fixed bases frozen") {
    const auto sc = synth_scene(sp);
    const auto a = fit(sc.dataset, cfg);
    const auto b = fit(sc.dataset, cfg);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(metrics_csv_row(a.log[i]) == metrics_csv_row(b.log[i]));
    CHECK(a.model.coeffs() == b.model.coeffs());
    const FixedGeneratorSet fresh;
    for (std::size_t k = 0; k < 6; ++k) CHECK(a.model.fixed()[k].vector() == fresh[k].vector());
    // Canonical frame stays the identity.
    const std::size_t t0 = canonical_frame(4);
    for (std::size_t i = 0; i < a.model.dynamic_count(); ++i)
      for (double c : a.model.row(i, t0)) CHECK(c == 0.0);
  }
  SUBCASE("no motion leaves coefficients near zero") {
    sp.velocity = Vec3::Zero();
    sp.motion = MotionKind::RigidTranslate;
    const auto sc = synth_scene(sp);
    cfg.schedule.lr = 1e-4;
    cfg.schedule.init_iters = 50;
    cfg.schedule.joint_epochs = 1;
    const auto res = fit(sc.dataset, cfg);
    double cmax = 0.0;
    for (double c : res.model.coeffs()) cmax = std::max(cmax, std::abs(c));
    CHECK(cmax < 1e-2);
  }
  SUBCASE("a dominant coefficient penalty keeps motion small") {
    const auto sc = synth_scene(sp);
    FitConfig heavy = cfg, none = cfg;
    heavy.loss.w_coeff = 1e4;
    none.loss.w_coeff = 0.0;
    heavy.schedule.lr_scale.coeffs = none.schedule.lr_scale.coeffs = 10.0;
    auto mean_abs = [](const MotionModel& m) {
      double s = 0.0;
      for (double c : m.coeffs()) s += std::abs(c);
      return s / static_cast<double>(m.coeffs().size());
    };
    CHECK(mean_abs(fit(sc.dataset, heavy).model) < 0.5 * mean_abs(fit(sc.dataset, none).model));
  }
}

}  // TEST_SUITE
