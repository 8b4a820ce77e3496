#include <doctest.h>

#include "oracles.hpp"
#include "splatfuse/common.hpp"
#include "splatfuse/geometry.hpp"

using namespace splatfuse;

namespace {

Camera unit_camera() {
  Camera cam;
  cam.id = 0;
  cam.intrinsics.fx = cam.intrinsics.fy = 100.0;
  cam.intrinsics.cx = cam.intrinsics.cy = 50.0;
  cam.intrinsics.width = cam.intrinsics.height = 101;
  return cam;
}

}  // namespace

TEST_SUITE("conformance") {

TEST_CASE("geometry: project on the principal axis") {
  const Camera cam = unit_camera();
  const auto r = project(cam, {0.0, 0.0, 1.0});
  REQUIRE(r.has_value());
  CHECK(r->pixel.x() == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r->pixel.y() == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r->depth == doctest::Approx(1.0));
}

TEST_CASE("geometry: project rejects points behind the camera") {
  CHECK_FALSE(project(unit_camera(), {0.0, 0.0, -1.0}).has_value());
  CHECK_FALSE(project(unit_camera(), {0.0, 0.0, 0.0}).has_value());
}

TEST_CASE("geometry: project off-axis point") {
  const auto r = project(unit_camera(), {0.1, 0.2, 2.0});
  REQUIRE(r.has_value());
  // fx*X/Z + cx = 100*0.05 + 50, fy*Y/Z + cy = 100*0.1 + 50
  CHECK(r->pixel.x() == doctest::Approx(55.0).epsilon(1e-12));
  CHECK(r->pixel.y() == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(r->depth == doctest::Approx(2.0));
}

TEST_CASE("geometry: backproject on the principal axis") {
  const Eigen::Vector3d w = backproject(unit_camera(), {50.0, 50.0}, 3.0);
  CHECK((w - Eigen::Vector3d(0, 0, 3)).norm() < 1e-12);
}

TEST_CASE("geometry: backproject rejects non-positive depth") {
  CHECK_THROWS_AS(backproject(unit_camera(), {50.0, 50.0}, 0.0), DataError);
  CHECK_THROWS_AS(backproject(unit_camera(), {50.0, 50.0}, -2.0), DataError);
}

TEST_CASE("geometry: project/backproject round-trip over 1000 random rays") {
  SeededRng rng(42);
  Camera cam = unit_camera();
  for (int i = 0; i < 1000; ++i) {
    if (i % 10 == 0) {  // randomize the camera every few rays
      cam.pose.q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
      while (cam.pose.q.norm() < 1e-6)
        cam.pose.q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
      cam.pose.q.normalize();
      cam.pose.t = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    }
    const Eigen::Vector2d pixel{rng.uniform(0, 100), rng.uniform(0, 100)};
    const double depth = rng.uniform(0.1, 50.0);
    const Eigen::Vector3d world = backproject(cam, pixel, depth);
    const auto back = project(cam, world);
    REQUIRE(back.has_value());
    CHECK((back->pixel - pixel).norm() / std::max(1.0, pixel.norm()) < 1e-6);
    CHECK(std::abs(back->depth - depth) / depth < 1e-6);
  }
}

TEST_CASE("geometry: backproject with a translated pose") {
  Camera cam = unit_camera();
  cam.pose.t = {1.0, 0.0, 0.0};  // x_cam = x_world + (1,0,0)
  const Eigen::Vector3d w = backproject(cam, {50.0, 50.0}, 1.0);
  CHECK((w - Eigen::Vector3d(-1, 0, 1)).norm() < 1e-12);
}

TEST_CASE("geometry: reproject_pixel is the identity between equal cameras") {
  const Camera cam = unit_camera();
  SeededRng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d p{rng.uniform(0, 100), rng.uniform(0, 100)};
    const double d = rng.uniform(0.05, 20.0);
    const auto r = reproject_pixel(cam, cam, p, d);
    REQUIRE(r.has_value());
    CHECK((r->pixel - p).norm() < 1e-9);
    CHECK(std::abs(r->depth - d) < 1e-9);
  }
}

TEST_CASE("geometry: reproject_pixel shortens depth when the target camera advances") {
  const Camera cam_a = unit_camera();
  Camera cam_b = unit_camera();
  cam_b.pose.t = {0.0, 0.0, -1.0};  // camera position +1 m along z
  const auto r = reproject_pixel(cam_a, cam_b, {50.0, 50.0}, 2.0);
  REQUIRE(r.has_value());
  CHECK(r->depth == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("geometry: reproject_pixel reports points behind the target camera as absent") {
  const Camera cam_a = unit_camera();
  Camera cam_b = unit_camera();
  cam_b.pose.t = {0.0, 0.0, -5.0};  // target camera 5 m ahead
  CHECK_FALSE(reproject_pixel(cam_a, cam_b, {50.0, 50.0}, 2.0).has_value());
}

}  // TEST_SUITE
