// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "doctest.h"
#include "oracles.hpp"

#include "msplat/errors.hpp"
#include "msplat/rasterizer.hpp"

#include <random>

using namespace msplat;

namespace {

Camera axis_camera(int w = 33, int h = 33, double f = 50.0) {
  Camera c;
  c.intrinsics = {f, f, 0.5 * (w - 1), 0.5 * (h - 1), w, h};
  return c;
}

PosedCloud single(const Vec3& mean, double scale, double opacity, const Vec3& color) {
  GaussianCloud cloud;
  Gaussian g;
  g.mean = mean;
  g.log_scale = Vec3::Constant(std::log(scale));
  g.opacity_logit = logit(opacity);
  g.color = color;
  cloud.push_back(g, false);
  return pose_at_time(cloud, MotionModel(0, 1, 6), 0);
}

// Weighted sum of every render output; weights are the upstream gradients.
struct Probe {
  Image wr, wd, wa;
  double operator()(const RenderTarget& t) const {
    double L = 0.0;
    for (std::size_t i = 0; i < wr.data.size(); ++i) L += wr.data[i] * t.rgb.data[i];
    for (std::size_t i = 0; i < wd.data.size(); ++i) {
      L += wd.data[i] * t.depth.data[i] + wa.data[i] * t.alpha.data[i];
    }
    return L;
  }
};

}  // namespace

TEST_SUITE("rasterizer") {

TEST_CASE("on-axis projection closed form") {
  const Camera cam = axis_camera(64, 48, 100.0);
  const double s = 0.05, z = 2.0;
  const auto sp = project_gaussian(Vec3(0, 0, z), Mat3::Identity(), Vec3::Constant(std::log(s)),
                                   0.0, Vec3::Zero(), cam);
  REQUIRE(sp);
  CHECK((sp->mean - Vec2(31.5, 23.5)).norm() < 1e-12);
  const double expect = std::pow(100.0 * s / z, 2);
  CHECK(sp->cov(0, 0) == doctest::Approx(expect + 0.3));
  CHECK(sp->cov(1, 1) == doctest::Approx(expect + 0.3));
  CHECK(std::abs(sp->cov(0, 1)) < 1e-12);
  const auto far = project_gaussian(Vec3(0, 0, 2 * z), Mat3::Identity(),
                                    Vec3::Constant(std::log(s)), 0.0, Vec3::Zero(), cam);
  CHECK((far->cov(0, 0) - 0.3) == doctest::Approx(expect / 4.0));
  CHECK_FALSE(project_gaussian(Vec3(0, 0, -1), Mat3::Identity(), Vec3::Zero(), 0.0,
                               Vec3::Zero(), cam));
}

TEST_CASE("projected covariance matches Monte-Carlo samples") {
  Camera cam;
  cam.intrinsics = {200, 180, 64, 48, 128, 96};
  cam.extrinsics = look_at(Vec3(0.5, -0.3, -3.0), Vec3(0.2, 0.1, 0.0));
  const Vec3 mean(0.4, -0.3, 0.2);
  const Mat3 R = Eigen::AngleAxisd(0.7, Vec3(1, 2, -1).normalized()).toRotationMatrix();
  const Vec3 scale(0.06, 0.02, 0.035);
  const auto sp = project_gaussian(mean, R, scale.array().log(), 0.0, Vec3::Zero(), cam);
  REQUIRE(sp);
  const Mat2 analytic = sp->cov - 0.3 * Mat2::Identity();

  std::mt19937_64 rng(17);
  std::normal_distribution<double> N(0.0, 1.0);
  const int n = 100000;
  Vec2 m = Vec2::Zero();
  Mat2 c = Mat2::Zero();
  std::vector<Vec2> px(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 x = mean + R * scale.cwiseProduct(Vec3(N(rng), N(rng), N(rng)));
    px[i] = project_point(x, cam.intrinsics, cam.extrinsics).pixel;
    m += px[i];
  }
  m /= n;
  for (const auto& p : px) c += (p - m) * (p - m).transpose();
  c /= n - 1;
  CHECK((sp->mean - m).norm() < 0.05 * std::sqrt(analytic.trace()));
  CHECK((c - analytic).norm() < 0.05 * analytic.norm());
}

TEST_CASE("single splat") {
  const Camera cam = axis_camera();
  const auto posed = single(Vec3(0, 0, 2), 0.1, 0.99, Vec3(1, 0, 0));
  const auto t = render(posed, cam, Vec3::Zero());
  CHECK(t.rgb.at(16, 16, 0) == doctest::Approx(0.99));
  CHECK(t.rgb.at(16, 16, 1) == 0.0);
  CHECK(t.alpha.at(16, 16) == doctest::Approx(0.99));
  // Depth at the centre is z up to the missing (1 - alpha) share.
  CHECK(std::abs(t.depth.at(16, 16) - 2.0) <= (1.0 - t.alpha.at(16, 16)) * 2.0 + 1e-12);
  // Empty pixels get the background and zero depth.
  const auto far = render(posed, cam, Vec3(0.2, 0.3, 0.4));
  CHECK(far.rgb.at(0, 0, 2) == doctest::Approx(0.4));
  CHECK(far.depth.at(0, 0) == 0.0);
}

TEST_CASE("front splat occludes the back one") {
  const Camera cam = axis_camera();
  GaussianCloud cloud;
  Gaussian red, green;
  red.mean = Vec3(0, 0, 1);
  red.log_scale = Vec3::Constant(std::log(0.05));
  red.opacity_logit = logit(0.9);
  red.color = Vec3(1, 0, 0);
  green = red;
  green.mean = Vec3(0, 0, 2);
  green.log_scale = Vec3::Constant(std::log(0.1));
  green.color = Vec3(0, 1, 0);
  cloud.push_back(green, false);
  cloud.push_back(red, false);
  const auto t = render(pose_at_time(cloud, MotionModel(0, 1, 6), 0), cam, Vec3::Zero());
  const double a = 0.9;
  CHECK(t.rgb.at(16, 16, 0) == doctest::Approx(a));
  CHECK(t.rgb.at(16, 16, 1) == doctest::Approx((1 - a) * a));
}

TEST_CASE("tiled renderer matches the brute-force compositor") {
  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto s = oracle::random_scene(rng, 10 + 5 * trial, 32, 32);
    const Vec3 bg(0.1, 0.4, 0.7);
    const auto t = render(pose_at_time(s.cloud, MotionModel(s.cloud.size(), 1, 6), 0), s.camera, bg);
    const auto ref = oracle::brute_force(oracle::to_gauss(s.cloud), s.camera.intrinsics,
                                         s.camera.extrinsics.pose.matrix(), bg);
    worst = std::max({worst, oracle::max_abs_diff(t.rgb, ref.rgb),
                      oracle::max_abs_diff(t.depth, ref.depth),
                      oracle::max_abs_diff(t.alpha, ref.alpha)});
    // Energy bound.
    for (double a : t.alpha.data) CHECK((a >= 0.0 && a <= 1.0));
    for (int i = 0; i < 32 * 32; ++i) {
      for (int ch = 0; ch < 3; ++ch) {
        double cmax = bg[ch];
        for (const auto& g : s.cloud.gaussians) cmax = std::max(cmax, g.color[ch]);
        CHECK(t.rgb.data[i * 3 + ch] <= cmax + 1e-6);
      }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("rendering is deterministic and worker-independent") {
  std::mt19937_64 rng(29);
  auto s = oracle::random_scene(rng, 40, 48, 40);
  const auto posed = pose_at_time(s.cloud, MotionModel(s.cloud.size(), 1, 6), 0);
  RenderOptions one, four;
  four.workers = 4;
  const auto a = render(posed, s.camera, Vec3::Zero(), one);
  const auto b = render(posed, s.camera, Vec3::Zero(), one);
  const auto c = render(posed, s.camera, Vec3::Zero(), four);
  CHECK(a.rgb.data == b.rgb.data);
  CHECK(a.rgb.data == c.rgb.data);  // tiles own their pixels
}

TEST_CASE("pixel contributions sum to alpha") {
  std::mt19937_64 rng(31);
  auto s = oracle::random_scene(rng, 20, 32, 32);
  const auto t = render(pose_at_time(s.cloud, MotionModel(s.cloud.size(), 1, 6), 0), s.camera,
                        Vec3::Zero());
  for (int y = 0; y < 32; y += 5) {
    for (int x = 0; x < 32; x += 5) {
      double sum = 0.0, depth = 0.0;
      for (const auto& c : pixel_contributions(t, x, y)) {
        sum += c.weight;
        depth += c.weight * s.camera.extrinsics.pose.apply(s.cloud.gaussians[c.index].mean).z();
      }
      CHECK(sum == doctest::Approx(t.alpha.at(x, y)).epsilon(1e-12));
      CHECK(depth == doctest::Approx(t.depth.at(x, y)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS((void)pixel_contributions(t, 32, 0), InvalidArgument);
  CHECK_THROWS_AS((void)pixel_contributions(RenderTarget{}, 0, 0), InvalidArgument);
}

TEST_CASE("backward: trivial cases") {
  const Camera cam = axis_camera();
  GaussianCloud cloud;
  Gaussian g;
  g.mean = Vec3(0, 0, 2);
  g.log_scale = Vec3::Constant(std::log(0.1));
  g.opacity_logit = logit(0.7);
  cloud.push_back(g, true);
  MotionModel m(1, 1, 7);
  const auto t = render(pose_at_time(cloud, m, 0), cam, Vec3::Zero());

  const Image zr(33, 33, 3), zd(33, 33, 1), za(33, 33, 1);
  const auto zero = render_backward(t, zr, zd, za, cloud, m);
  CHECK(zero.means[0].norm() == 0.0);
  CHECK(zero.colors[0].norm() == 0.0);
  for (double c : zero.coeffs) CHECK(c == 0.0);
  CHECK(zero.trainable[0].norm() == 0.0);

  Image dr(33, 33, 3);
  dr.at(16, 16, 0) = 1.0;
  const auto gr = render_backward(t, dr, zd, za, cloud, m);
  CHECK(gr.colors[0][0] == doctest::Approx(0.7));  // T = 1, alpha = o at the centre
  CHECK(gr.colors[0][1] == 0.0);

  CHECK_THROWS_AS((void)render_backward(RenderTarget{}, dr, zd, za, cloud, m), ContractError);
  CHECK_THROWS_AS((void)render_backward(t, Image(4, 4, 3), zd, za, cloud, m), ContractError);
}

TEST_CASE("backward matches central differences") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto s = oracle::random_scene(rng, 5, 24, 24);
    s.cloud.dynamic_mask[4] = 0;
    MotionModel m(4, 3, 8);
    for (auto& c : m.coeffs()) c = 0.2 * U(rng);
    for (auto& b : m.trainable()) b = Twist::from_vector(0.4 * Vec6::NullaryExpr([&] { return U(rng); }));
    const std::size_t frame = 1;
    const Vec3 bg(0.1, 0.2, 0.3);
    Probe probe{Image(24, 24, 3), Image(24, 24, 1), Image(24, 24, 1)};
    for (auto* img : {&probe.wr, &probe.wd, &probe.wa})
      for (auto& v : img->data) v = U(rng);
    auto L = [&](const GaussianCloud& c, const MotionModel& mm) {
      return probe(render(pose_at_time(c, mm, frame), s.camera, bg));
    };
    const auto t = render(pose_at_time(s.cloud, m, frame), s.camera, bg);
    const auto G = render_backward(t, probe.wr, probe.wd, probe.wa, s.cloud, m);

    const double eps = 1e-6;
    auto check = [&](double an, auto&& perturb) {
      GaussianCloud cp = s.cloud, cm = s.cloud;
      MotionModel mp = m, mm = m;
      perturb(cp, mp, eps);
      perturb(cm, mm, -eps);
      const double fd = (L(cp, mp) - L(cm, mm)) / (2 * eps);
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
      worst = std::max(worst, rel);
    };
    for (std::size_t i = 0; i < 5; ++i) {
      for (int k = 0; k < 3; ++k) {
        check(G.means[i][k], [&](auto& c, auto&, double e) { c.gaussians[i].mean[k] += e; });
        check(G.log_scales[i][k], [&](auto& c, auto&, double e) { c.gaussians[i].log_scale[k] += e; });
        check(G.colors[i][k], [&](auto& c, auto&, double e) { c.gaussians[i].color[k] += e; });
      }
      for (int k = 0; k < 4; ++k)
        check(G.rotations[i][k], [&](auto& c, auto&, double e) { c.gaussians[i].rotation[k] += e; });
      check(G.opacity_logits[i], [&](auto& c, auto&, double e) { c.gaussians[i].opacity_logit += e; });
    }
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t b = 0; b < 8; ++b)
        check(G.coeffs[r * 8 + b], [&](auto&, auto& mm, double e) { mm.coeff(r, frame, b) += e; });
    for (std::size_t j = 0; j < 2; ++j)
      for (int k = 0; k < 6; ++k)
        check(G.trainable[j][k], [&](auto&, auto& mm, double e) {
          Vec6 v = mm.trainable()[j].vector();
          v[k] += e;
          mm.trainable()[j] = Twist::from_vector(v);
        });
  }
  CHECK(worst < 1e-3);
}

}  // TEST_SUITE
