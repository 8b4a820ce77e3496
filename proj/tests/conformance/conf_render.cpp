#include <doctest.h>

#include "oracles.hpp"
#include "splatfuse/render.hpp"

using namespace splatfuse;

namespace {

Camera wide_camera() {
  Camera cam;
  cam.intrinsics.fx = cam.intrinsics.fy = 100.0;
  cam.intrinsics.cx = cam.intrinsics.cy = 50.0;
  cam.intrinsics.width = cam.intrinsics.height = 101;
  return cam;
}

Gaussian axis_gaussian(double depth, double opacity_logit, const Eigen::Vector3d& color) {
  Gaussian g;
  g.center = {0.0, 0.0, depth};
  g.log_scales = {std::log(0.05), std::log(0.05), std::log(0.05)};
  g.opacity_logit = opacity_logit;
  g.color = color;
  return g;
}

}  // namespace

TEST_SUITE("conformance") {

TEST_CASE("render: single opaque gaussian peaks at the principal point") {
  const Camera cam = wide_camera();
  GaussianScene scene;
  scene.push_back(axis_gaussian(2.0, 10.0, {1.0, 0.8, 0.6}));
  const RenderOutput out = render(scene, cam);

  int bx = -1, by = -1;
  double best = -1.0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double v = out.color_at(x, y, 0) + out.color_at(x, y, 1) + out.color_at(x, y, 2);
      if (v > best) {
        best = v;
        bx = x;
        by = y;
      }
    }
  CHECK(bx == 50);
  CHECK(by == 50);
  CHECK(std::abs(out.depth_at(50, 50) - 2.0) < 1e-3);
}

TEST_CASE("render: empty scene produces zero buffers") {
  const RenderOutput out = render(GaussianScene{}, wide_camera());
  for (double v : out.color) CHECK(v == 0.0);
  for (double v : out.depth) CHECK(v == 0.0);
  for (double v : out.alpha) CHECK(v == 0.0);
}

TEST_CASE("render: near-opaque front gaussian dominates the composite") {
  const Camera cam = wide_camera();
  GaussianScene scene;
  scene.push_back(axis_gaussian(1.0, 20.0, {0.9, 0.1, 0.2}));  // front, opacity -> 1
  scene.push_back(axis_gaussian(2.0, 2.0, {0.0, 1.0, 0.0}));   // behind
  const RenderOutput out = render(scene, cam);

  // two-term compositing at the shared center pixel, evaluated by hand:
  // a_i = sigmoid(o_i) * g_i with g_i = 1 at each center
  const double a_front = sigmoid(20.0);
  const double a_back = sigmoid(2.0);
  const Eigen::Vector3d expected =
      a_front * Eigen::Vector3d(0.9, 0.1, 0.2) +
      (1.0 - a_front) * a_back * Eigen::Vector3d(0.0, 1.0, 0.0);
  for (int c = 0; c < 3; ++c)
    CHECK(std::abs(out.color_at(50, 50, c) - expected[c]) < 1e-9);
  // and the stated tolerances: front color and front depth within 1e-3
  CHECK(std::abs(out.color_at(50, 50, 0) - 0.9) < 1e-3);
  CHECK(std::abs(out.color_at(50, 50, 1) - 0.1) < 1e-3);
  CHECK(std::abs(out.depth_at(50, 50) - 1.0) < 1e-3);
}

TEST_CASE("render: color gradient of a single-gaussian scene matches finite differences") {
  const Camera cam = oracles::test_camera();
  GaussianScene scene;
  scene.push_back(axis_gaussian(2.5, 1.0, {0.4, 0.5, 0.6}));
  const oracles::RenderProbe probe = oracles::RenderProbe::random(cam, 9, false);
  for (int comp = 0; comp < 3; ++comp) {
    const oracles::Coord c{oracles::ParamKind::kColor, 0, comp};
    const double fd = oracles::fd_gradient(probe, scene, c);
    const double an = oracles::analytic_gradient(probe, scene, c);
    CHECK(oracles::grad_close(an, fd));
  }
}

TEST_CASE("render: pose translation gradient matches finite differences") {
  const Camera cam = oracles::test_camera();
  GaussianScene scene;
  scene.push_back(axis_gaussian(2.5, 1.0, {0.4, 0.5, 0.6}));
  const oracles::RenderProbe probe = oracles::RenderProbe::random(cam, 10, true);
  for (int comp = 0; comp < 3; ++comp) {
    const oracles::Coord c{oracles::ParamKind::kPoseTrans, 0, comp};
    const double fd = oracles::fd_gradient(probe, scene, c);
    const double an = oracles::analytic_gradient(probe, scene, c);
    CHECK(oracles::grad_close(an, fd));
  }
}

}  // TEST_SUITE
