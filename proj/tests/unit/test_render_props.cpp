#include <doctest.h>

#include <cstdlib>

#include "oracles.hpp"
#include "splatfuse/render.hpp"

using namespace splatfuse;

TEST_SUITE("render.props") {

TEST_CASE("gradients agree with central finite differences across all parameter kinds") {
  const Camera cam = oracles::test_camera();
  const GaussianScene scene = oracles::random_scene(20, 99);
  const oracles::RenderProbe probe = oracles::RenderProbe::random(cam, 1234, true, 1.2, 0.03);

  SeededRng coord_rng(555);
  for (int trial = 0; trial < 96; ++trial) {
    const oracles::Coord c = oracles::random_coord(coord_rng, static_cast<int>(scene.size()));
    const double fd = oracles::fd_gradient(probe, scene, c);
    const double an = oracles::analytic_gradient(probe, scene, c);
    CAPTURE(static_cast<int>(c.kind));
    CAPTURE(c.gauss);
    CAPTURE(c.comp);
    CAPTURE(fd);
    CAPTURE(an);
    CHECK(oracles::grad_close(an, fd));
  }
}

TEST_CASE("zero pixel gradient produces zero parameter gradients") {
  const Camera cam = oracles::test_camera();
  const GaussianScene scene = oracles::random_scene(10, 3);
  const std::size_t pix = static_cast<std::size_t>(cam.intrinsics.width) * cam.intrinsics.height;
  const RenderGrads g = render_with_gradients(scene, cam, std::vector<double>(pix * 3, 0.0), {});
  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK(g.scene.centers[i].norm() == 0.0);
    CHECK(g.scene.log_scales[i].norm() == 0.0);
    CHECK(g.scene.rotations[i].norm() == 0.0);
    CHECK(g.scene.opacity_logits[i] == 0.0);
    CHECK(g.scene.colors[i].norm() == 0.0);
  }
  CHECK(g.pose_rot.norm() == 0.0);
  CHECK(g.pose_trans.norm() == 0.0);
  CHECK(g.exposure_gain == 0.0);
  CHECK(g.exposure_bias == 0.0);
}

TEST_CASE("accumulated alpha stays in [0,1] and gates the depth output") {
  const Camera cam = oracles::test_camera();
  const GaussianScene scene = oracles::random_scene(40, 17);
  const RenderOutput out = render(scene, cam);
  for (double a : out.alpha) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0 + 1e-12);
  }
  for (std::size_t i = 0; i < out.alpha.size(); ++i)
    if (out.alpha[i] < 1e-4) CHECK(out.depth[i] == 0.0);
}

TEST_CASE("rendering is bit-identical regardless of the worker count") {
  const Camera cam = oracles::test_camera();
  const GaussianScene scene = oracles::random_scene(60, 11);

  setenv("SPLATFUSE_THREADS", "1", 1);
  const RenderOutput a = render(scene, cam);
  setenv("SPLATFUSE_THREADS", "7", 1);
  const RenderOutput b = render(scene, cam);
  unsetenv("SPLATFUSE_THREADS");

  CHECK(a.color == b.color);
  CHECK(a.depth == b.depth);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("gradient accumulation is bit-identical regardless of the worker count") {
  const Camera cam = oracles::test_camera();
  const GaussianScene scene = oracles::random_scene(30, 19);
  const oracles::RenderProbe probe = oracles::RenderProbe::random(cam, 77, true);

  setenv("SPLATFUSE_THREADS", "1", 1);
  const RenderGrads a = render_with_gradients(scene, cam, probe.color_weights, probe.depth_weights);
  setenv("SPLATFUSE_THREADS", "5", 1);
  const RenderGrads b = render_with_gradients(scene, cam, probe.color_weights, probe.depth_weights);
  unsetenv("SPLATFUSE_THREADS");

  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK(a.scene.centers[i] == b.scene.centers[i]);
    CHECK(a.scene.rotations[i] == b.scene.rotations[i]);
  }
  CHECK(a.pose_rot == b.pose_rot);
}

}  // TEST_SUITE
