#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "testing.hpp"
#include "trajattn/geometry.hpp"
#include "trajattn/ops.hpp"
#include "trajattn/rng.hpp"

using namespace trajattn;
using testing::check_gradients;

namespace {

FeatureMapGeometry stride4_geometry(int image = 32) {
  FeatureMapGeometry g;
  g.layers = {{3, 2, 1}, {3, 2, 1}};
  g.image_w = image;
  g.image_h = image;
  g.validate();
  return g;
}

CameraIntrinsics test_intrinsics() {
  CameraIntrinsics k;
  k.fx = k.fy = 32;
  k.cx = k.cy = 16;
  k.image_w = k.image_h = 32;
  k.validate();
  return k;
}

}  // namespace

TEST_CASE("pose round trip is identity") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    PoseSE3 pose = yaw_pose(rng.uniform(-3.14, 3.14),
                            {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-1, 1)});
    pose.validate();
    const Vec3 x{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Vec3 back = pose.from_parent(pose.to_parent(x));
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(back[static_cast<size_t>(i)] - x[static_cast<size_t>(i)]) < 1e-12);
    const Vec3 fwd = pose.to_parent(pose.from_parent(x));
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(fwd[static_cast<size_t>(i)] - x[static_cast<size_t>(i)]) < 1e-12);
  }
}

TEST_CASE("world_to_robot matches hand oracles") {
  PoseSE3 identity;
  Vec3 p = world_to_robot({1, 2, 3}, identity);
  CHECK(p == Vec3{1, 2, 3});

  PoseSE3 shifted;
  shifted.translation = {5, 0, 0};
  p = world_to_robot({6, 0, 0}, shifted);
  CHECK(std::fabs(p[0] - 1.0) < 1e-12);
  CHECK(std::fabs(p[1]) < 1e-12);

  // Robot yawed 90 degrees faces world +y; one meter ahead of it in world
  // is (0,1,0), which must land on the robot's forward axis.
  PoseSE3 yawed = yaw_pose(M_PI / 2.0, {0, 0, 0});
  p = world_to_robot({0, 1, 0}, yawed);
  CHECK(std::fabs(p[0] - 1.0) < 1e-12);
  CHECK(std::fabs(p[1]) < 1e-12);

  // Inverse composition.
  const Vec3 q{0.3, -1.2, 0.0};
  const Vec3 rt = world_to_robot(robot_to_world(q, yawed), yawed);
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(rt[static_cast<size_t>(i)] - q[static_cast<size_t>(i)]) < 1e-12);
}

TEST_CASE("pose composition chains transforms") {
  PoseSE3 a = yaw_pose(0.7, {1, 2, 0});
  PoseSE3 b = yaw_pose(-0.3, {0.5, -1, 0.25});
  PoseSE3 ab = a.compose(b);
  ab.validate();
  const Vec3 x{0.2, 0.4, -0.1};
  const Vec3 direct = ab.to_parent(x);
  const Vec3 chained = a.to_parent(b.to_parent(x));
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(direct[static_cast<size_t>(i)] - chained[static_cast<size_t>(i)]) < 1e-12);
}

TEST_CASE("robot_to_pixel matches the hand projection oracle") {
  const CameraIntrinsics k = test_intrinsics();
  const PoseSE3 cam = make_camera_pose(0.0, 0.0);
  cam.validate();

  // 2 m ahead, 0.5 m right of the robot (right = -y).
  PixelProjection p = robot_to_pixel({2.0, -0.5, 0.0}, cam, k);
  CHECK(p.u == doctest::Approx(24.0).epsilon(1e-12));
  CHECK(p.v == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(p.depth == doctest::Approx(2.0));
  CHECK_FALSE(p.clamped);

  // Optical axis hits the principal point at any depth.
  for (double d : {0.5, 2.0, 37.0}) {
    PixelProjection axis = robot_to_pixel({d, 0.0, 0.0}, cam, k);
    CHECK(axis.u == doctest::Approx(16.0));
    CHECK(axis.v == doctest::Approx(16.0));
  }

  // Doubling depth halves the offset from the principal point.
  PixelProjection far = robot_to_pixel({4.0, -0.5, 0.0}, cam, k);
  CHECK((far.u - k.cx) == doctest::Approx((p.u - k.cx) / 2.0));
}

TEST_CASE("camera height and pitch shift the projection as expected") {
  const CameraIntrinsics k = test_intrinsics();
  // Camera 0.5 m above the ground, level: a ground point 2 m ahead appears
  // below the image center.
  PixelProjection p = robot_to_pixel({2.0, 0.0, 0.0}, make_camera_pose(0.5, 0.0), k);
  CHECK(p.v == doctest::Approx(16.0 + 32.0 * 0.5 / 2.0));
  CHECK(p.u == doctest::Approx(16.0));

  // Pitching down moves the same point toward the image center.
  PixelProjection down = robot_to_pixel({2.0, 0.0, 0.0}, make_camera_pose(0.5, -0.2), k);
  CHECK(down.v < p.v);
  make_camera_pose(0.5, -0.2).validate();
}

TEST_CASE("points behind the camera clamp instead of exploding") {
  const CameraIntrinsics k = test_intrinsics();
  const PoseSE3 cam = make_camera_pose(0.0, 0.0);
  PixelProjection p = robot_to_pixel({-1.0, 0.3, 0.0}, cam, k);
  CHECK(p.clamped);
  CHECK(std::isfinite(p.u));
  CHECK(std::isfinite(p.v));
  CHECK(p.depth == doctest::Approx(-1.0));
}

TEST_CASE("pixel_to_featuremap divides by the output stride and clamps") {
  FeatureMapGeometry g;
  g.layers = {{3, 2, 1}, {3, 2, 1}, {3, 2, 1}};
  g.image_w = g.image_h = 128;
  g.validate();
  CHECK(g.out_stride() == 8);
  Vec2 x = pixel_to_featuremap(64, 32, g);
  CHECK(x[0] == doctest::Approx(8.0));
  CHECK(x[1] == doctest::Approx(4.0));

  FeatureMapGeometry unit;
  unit.layers = {{1, 1, 0}};
  unit.image_w = unit.image_h = 16;
  unit.validate();
  Vec2 same = pixel_to_featuremap(3.5, 7.25, unit);
  CHECK(same[0] == 3.5);
  CHECK(same[1] == 7.25);

  FeatureMapGeometry half;
  half.layers = {{3, 2, 1}};
  half.image_w = half.image_h = 32;
  half.validate();
  Vec2 clamped = pixel_to_featuremap(-5, 3, half);
  CHECK(clamped[0] == 0.0);
  CHECK(clamped[1] == doctest::Approx(1.5));
}

TEST_CASE("feature geometry validation rejects misaligned layers") {
  FeatureMapGeometry bad;
  bad.layers = {{4, 2, 1}};  // 2*padding != kernel-1
  bad.image_w = bad.image_h = 32;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  FeatureMapGeometry indivisible;
  indivisible.layers = {{3, 2, 1}, {3, 2, 1}};
  indivisible.image_w = indivisible.image_h = 30;
  CHECK_THROWS_AS(indivisible.validate(), std::invalid_argument);
}

TEST_CASE("gaussian mask hits its analytic values") {
  AttentionCovariance iso{CovarianceVariant::isotropic, {0.0}};  // sigma^2 = 1
  auto mask = gaussian_mask({4.0, 3.0}, iso, 8, 8);
  CHECK(mask[3 * 8 + 4] == doctest::Approx(1.0).epsilon(1e-12));          // peak = 1/sigma^2
  CHECK(mask[3 * 8 + 5] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));  // one cell away
  CHECK(mask[2 * 8 + 4] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  for (double v : mask) CHECK(v > 0.0);
}

TEST_CASE("gaussian mask argmax tracks the rounded position") {
  AttentionCovariance iso{CovarianceVariant::isotropic, {std::log(1.3)}};
  auto mask = gaussian_mask({4.3, 2.6}, iso, 8, 8);
  size_t best = 0;
  for (size_t i = 1; i < mask.size(); ++i) {
    if (mask[i] > mask[best]) best = i;
  }
  CHECK(best % 8 == 4);  // column = round(4.3)
  CHECK(best / 8 == 3);  // row = round(2.6)
}

TEST_CASE("gaussian mask decreases monotonically away from the center") {
  AttentionCovariance iso{CovarianceVariant::isotropic, {std::log(2.0)}};
  auto mask = gaussian_mask({3.0, 3.0}, iso, 8, 8);
  for (int j = 3; j + 1 < 8; ++j) CHECK(mask[static_cast<size_t>(3 * 8 + j)] > mask[static_cast<size_t>(3 * 8 + j + 1)]);
  for (int i = 3; i + 1 < 8; ++i) CHECK(mask[static_cast<size_t>(i * 8 + 3)] > mask[static_cast<size_t>((i + 1) * 8 + 3)]);
}

TEST_CASE("covariance variants encoding the same sigma agree") {
  const Vec2 pos{3.4, 4.1};
  const double s2 = 2.5;
  AttentionCovariance iso{CovarianceVariant::isotropic, {std::log(s2)}};
  AttentionCovariance diag{CovarianceVariant::diagonal, {std::log(s2), std::log(s2)}};
  AttentionCovariance full{CovarianceVariant::full, {std::sqrt(s2), 0, 0, std::sqrt(s2)}};
  auto a = gaussian_mask(pos, iso, 8, 8);
  auto b = gaussian_mask(pos, diag, 8, 8);
  auto c = gaussian_mask(pos, full, 8, 8);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(std::fabs(a[i] - b[i]) < 1e-12);
    CHECK(std::fabs(a[i] - c[i]) < 1e-12);
  }

  // Identity factor reproduces unit variance exactly.
  AttentionCovariance unit_full{CovarianceVariant::full, {1, 0, 0, 1}};
  AttentionCovariance unit_iso{CovarianceVariant::isotropic, {0.0}};
  auto d = gaussian_mask(pos, unit_full, 8, 8);
  auto e = gaussian_mask(pos, unit_iso, 8, 8);
  for (size_t i = 0; i < d.size(); ++i) CHECK(d[i] == e[i]);
}

TEST_CASE("degenerate covariances are floored, never singular") {
  AttentionCovariance tiny{CovarianceVariant::isotropic, {-100.0}};
  auto mask = gaussian_mask({4.0, 4.0}, tiny, 8, 8);
  CHECK(std::isfinite(mask[4 * 8 + 4]));
  CHECK(mask[4 * 8 + 4] == doctest::Approx(1.0 / 1e-4));

  AttentionCovariance zero_phi{CovarianceVariant::full, {0, 0, 0, 0}};
  auto fm = gaussian_mask({4.0, 4.0}, zero_phi, 8, 8);
  CHECK(std::isfinite(fm[4 * 8 + 4]));
  CHECK(fm[4 * 8 + 4] == doctest::Approx(1.0 / 1e-4));
}

TEST_CASE("projection op matches the pure path and finite differences") {
  const CameraIntrinsics k = test_intrinsics();
  const PoseSE3 cam = make_camera_pose(0.5, -0.17);
  const FeatureMapGeometry g = stride4_geometry();

  Tensor x({3}, std::vector<double>{2.0, 0.3, -0.1});
  ProjectionResult res = robot_point_to_featuremap(x, cam, k, g);
  PixelProjection pix = robot_to_pixel({2.0, 0.3, -0.1}, cam, k);
  Vec2 expect = pixel_to_featuremap(pix.u, pix.v, g);
  CHECK(res.coords.values()[0] == doctest::Approx(expect[0]).epsilon(1e-12));
  CHECK(res.coords.values()[1] == doctest::Approx(expect[1]).epsilon(1e-12));
  CHECK_FALSE(res.clamped_depth);
  CHECK_FALSE(res.railed_x);
  CHECK_FALSE(res.railed_y);

  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor pt({3}, std::vector<double>{rng.uniform(1.5, 4.0), rng.uniform(-0.4, 0.4),
                                       rng.uniform(-0.2, 0.2)});
    Tensor w = testing::random_tensor({2}, rng);
    auto r = check_gradients(
        [&] { return sum(mul(w, robot_point_to_featuremap(pt, cam, k, g).coords)); }, {pt},
        1e-6);
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("projection op stops depth gradients when clamped") {
  const CameraIntrinsics k = test_intrinsics();
  const PoseSE3 cam = make_camera_pose(0.0, 0.0);
  const FeatureMapGeometry g = stride4_geometry();

  Tensor x({3}, std::vector<double>{-1.0, 0.05, 0.02});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    ProjectionResult res = robot_point_to_featuremap(x, cam, k, g);
    CHECK(res.clamped_depth);
    tape.backward(sum(res.coords));
  }
  // Forward axis feeds only the clamped depth, so its gradient vanishes;
  // the lateral axis still moves the projection.
  CHECK(x.grad_values()[0] == 0.0);
  CHECK(x.grad_values()[1] != 0.0);
}

TEST_CASE("mask op agrees with the pure mask and its gradients check out") {
  const int fw = 8, fh = 8;
  Rng rng(23);

  for (CovarianceVariant variant :
       {CovarianceVariant::isotropic, CovarianceVariant::diagonal, CovarianceVariant::full}) {
    std::vector<double> params;
    switch (variant) {
      case CovarianceVariant::isotropic: params = {std::log(1.8)}; break;
      case CovarianceVariant::diagonal: params = {std::log(1.2), std::log(2.3)}; break;
      case CovarianceVariant::full: params = {1.3, 0.4, -0.2, 1.1}; break;
    }
    Tensor pos({2}, std::vector<double>{3.7, 4.2});
    Tensor cov({static_cast<int>(params.size())}, params);
    Tensor mask = gaussian_mask_op(pos, cov, variant, fw, fh);

    auto pure = gaussian_mask({3.7, 4.2}, {variant, params}, fw, fh);
    REQUIRE(mask.numel() == static_cast<int>(pure.size()));
    for (size_t i = 0; i < pure.size(); ++i) {
      CHECK(mask.values()[i] == doctest::Approx(pure[i]).epsilon(1e-12));
    }

    Tensor w = testing::random_tensor({fh, fw}, rng);
    auto r = check_gradients(
        [&] { return sum(mul(w, gaussian_mask_op(pos, cov, variant, fw, fh))); }, {pos, cov});
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("mask op blocks shape gradients at the variance floor") {
  Tensor pos({2}, std::vector<double>{4.0, 4.0});
  Tensor cov({1}, std::vector<double>{-20.0});  // far below the log floor
  pos.set_requires_grad(true);
  cov.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(gaussian_mask_op(pos, cov, CovarianceVariant::isotropic, 8, 8)));
  }
  CHECK(cov.grad_values()[0] == 0.0);
}

TEST_CASE("covariance parameter validation") {
  CHECK(covariance_param_count(CovarianceVariant::isotropic) == 1);
  CHECK(covariance_param_count(CovarianceVariant::diagonal) == 2);
  CHECK(covariance_param_count(CovarianceVariant::full) == 4);
  CHECK(covariance_variant_from_string("diagonal") == CovarianceVariant::diagonal);
  CHECK_THROWS_AS(covariance_variant_from_string("banana"), std::invalid_argument);

  AttentionCovariance wrong{CovarianceVariant::diagonal, {0.0}};
  CHECK_THROWS_AS(gaussian_mask({1, 1}, wrong, 4, 4), std::invalid_argument);
  Tensor pos({2}, 0.0);
  CHECK_THROWS_AS(gaussian_mask_op(pos, Tensor({3}, 0.0), CovarianceVariant::full, 4, 4),
                  std::invalid_argument);
}

TEST_CASE("camera intrinsics validation") {
  CameraIntrinsics bad = test_intrinsics();
  bad.fx = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = test_intrinsics();
  bad.cx = 32;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
