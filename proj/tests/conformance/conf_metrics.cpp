#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "splatfuse/metrics.hpp"

using namespace splatfuse;

namespace {

std::vector<RigidPose> arc_trajectory(int n, uint64_t seed) {
  SeededRng rng(seed);
  std::vector<RigidPose> poses;
  for (int i = 0; i < n; ++i) {
    RigidPose p;
    p.q = Eigen::Quaterniond(Eigen::AngleAxisd(0.1 * i, Eigen::Vector3d::UnitY()));
    p.t = {0.5 * i + rng.uniform(-0.05, 0.05), rng.uniform(-0.2, 0.2), 2.0 + 0.1 * i};
    poses.push_back(p);
  }
  return poses;
}

std::vector<RigidPose> apply_world_motion(const std::vector<RigidPose>& poses,
                                          const RigidPose& g) {
  // world moves by g: new w2c = old ∘ g^{-1}
  std::vector<RigidPose> out;
  for (const RigidPose& p : poses) out.push_back(p.compose(g.inverse()));
  return out;
}

}  // namespace

TEST_SUITE("conformance") {

TEST_CASE("metrics: psnr of identical images is the +inf sentinel") {
  const Image img(16, 12, 3, 0.42f);
  CHECK(std::isinf(psnr(img, img)));
}

TEST_CASE("metrics: constant difference of 0.1 is 20 dB") {
  Image a(20, 15, 3, 0.25f);
  Image b(20, 15, 3, 0.35f);
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-6);
}

TEST_CASE("metrics: constant difference of 1.0 is 0 dB") {
  Image a(20, 15, 3, 0.0f);
  Image b(20, 15, 3, 1.0f);
  CHECK(psnr(a, b) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metrics: psnr is symmetric") {
  SeededRng rng(3);
  Image a(20, 15, 3), b(20, 15, 3);
  for (float& v : a.data) v = static_cast<float>(rng.uniform());
  for (float& v : b.data) v = static_cast<float>(rng.uniform());
  CHECK(psnr(a, b) == psnr(b, a));
}

TEST_CASE("metrics: ATE of identical trajectories is zero") {
  const std::vector<RigidPose> t = arc_trajectory(8, 1);
  const AteResult r = ate_rmse(t, t);
  CHECK(r.rmse < 1e-12);
}

TEST_CASE("metrics: ATE absorbs a global rigid motion") {
  const std::vector<RigidPose> ref = arc_trajectory(10, 2);
  RigidPose g;
  g.q = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
  g.t = {4.0, -2.0, 1.5};
  const std::vector<RigidPose> moved = apply_world_motion(ref, g);
  CHECK(ate_rmse(moved, ref).rmse < 1e-9);
  CHECK(ate_rmse(moved, ref, AteAlignment::kRigid).rmse < 1e-9);
  CHECK(ate_rmse(ref, moved).rmse < 1e-9);
}

TEST_CASE("metrics: a single displaced pose among ten dominates the RMSE") {
  const std::vector<RigidPose> ref = arc_trajectory(10, 4);
  std::vector<RigidPose> est = ref;
  // displace one camera position by 0.3 m: shift the w2c translation by
  // -R * delta so that center() moves by exactly delta
  const Eigen::Vector3d delta(0.0, 0.3, 0.0);
  est[4].t -= est[4].q * delta;

  const AteResult r = ate_rmse(est, ref, AteAlignment::kRigid);
  const double oracle = oracles::reference_ate(est, ref, false);
  CHECK(std::abs(r.rmse - oracle) < 1e-9);
  CHECK(r.rmse == doctest::Approx(0.3 / std::sqrt(10.0)).epsilon(0.1));
}

TEST_CASE("metrics: similarity alignment matches the independent oracle") {
  const std::vector<RigidPose> ref = arc_trajectory(12, 6);
  std::vector<RigidPose> est = arc_trajectory(12, 6);
  SeededRng rng(9);
  for (RigidPose& p : est) p.t += Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 0.01;
  const AteResult r = ate_rmse(est, ref, AteAlignment::kSimilarity);
  CHECK(std::abs(r.rmse - oracles::reference_ate(est, ref, true)) < 1e-9);
}

TEST_CASE("metrics: degenerate zero-spread trajectories fall back to rigid") {
  std::vector<RigidPose> pile(5);
  for (auto& p : pile) p.t = {1.0, 2.0, 3.0};
  std::vector<RigidPose> ref(5);
  for (auto& p : ref) p.t = {0.0, 0.0, 1.0};
  const AteResult r = ate_rmse(pile, ref, AteAlignment::kSimilarity);
  CHECK(r.degenerate);
  CHECK(r.scale == 1.0);
  CHECK(r.rmse < 1e-9);  // centroids align exactly
}

TEST_CASE("metrics: trajectory length mismatch and short trajectories are errors") {
  const std::vector<RigidPose> a = arc_trajectory(5, 1);
  const std::vector<RigidPose> b = arc_trajectory(6, 1);
  CHECK_THROWS_AS(ate_rmse(a, b), DataError);
  const std::vector<RigidPose> two = arc_trajectory(2, 1);
  CHECK_THROWS_AS(ate_rmse(two, two), DataError);
}

}  // TEST_SUITE
