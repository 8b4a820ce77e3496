#pragma once

// Test-only oracles, independent of the library code paths they check.

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <functional>
#include <vector>

#include "splatfuse/geometry.hpp"
#include "splatfuse/optim.hpp"
#include "splatfuse/render.hpp"
#include "splatfuse/rng.hpp"
#include "splatfuse/scene.hpp"

namespace oracles {

using splatfuse::Camera;
using splatfuse::Gaussian;
using splatfuse::GaussianScene;
using splatfuse::SeededRng;

// ---------------------------------------------------------------------------
// scenes and cameras for gradient / property tests

inline Camera test_camera(int width = 48, int height = 36) {
  Camera cam;
  cam.id = 0;
  cam.intrinsics.width = width;
  cam.intrinsics.height = height;
  cam.intrinsics.fx = cam.intrinsics.fy = 0.9 * width;
  cam.intrinsics.cx = 0.5 * (width - 1);
  cam.intrinsics.cy = 0.5 * (height - 1);
  return cam;
}

// Random gaussians in a box in front of the camera.
inline GaussianScene random_scene(int count, uint64_t seed, double spread = 0.8,
                                  double depth_lo = 2.0, double depth_hi = 4.0) {
  SeededRng rng(seed);
  GaussianScene scene;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    g.center = {rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                rng.uniform(depth_lo, depth_hi)};
    g.log_scales = {std::log(rng.uniform(0.05, 0.2)), std::log(rng.uniform(0.05, 0.2)),
                    std::log(rng.uniform(0.02, 0.1))};
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    while (q.norm() < 1e-6) q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    q.normalize();
    g.rotation = q;
    g.opacity_logit = splatfuse::logit(rng.uniform(0.3, 0.9));
    g.color = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    scene.push_back(g);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// finite differences over the render parameters

enum class ParamKind { kCenter, kLogScale, kRotation, kOpacity, kColor, kPoseRot, kPoseTrans,
                       kExposureA, kExposureB };

struct Coord {
  ParamKind kind;
  int gauss = 0;
  int comp = 0;
};

// Fixed linear functional over the (exposed color, depth) render outputs:
// L = sum_p color_weights . exposed(p) + depth_weights(p) * depth(p).
struct RenderProbe {
  Camera camera;
  std::vector<double> color_weights;  // H*W*3
  std::vector<double> depth_weights;  // H*W (may be all zero)
  double exposure_a = 1.0;
  double exposure_b = 0.0;

  static RenderProbe random(const Camera& cam, uint64_t seed, bool with_depth,
                            double a = 1.0, double b = 0.0) {
    RenderProbe p;
    p.camera = cam;
    p.exposure_a = a;
    p.exposure_b = b;
    SeededRng rng(seed);
    const std::size_t pix =
        static_cast<std::size_t>(cam.intrinsics.width) * cam.intrinsics.height;
    p.color_weights.resize(pix * 3);
    for (double& w : p.color_weights) w = rng.uniform(-1.0, 1.0);
    p.depth_weights.assign(pix, 0.0);
    if (with_depth)
      for (double& w : p.depth_weights) w = rng.uniform(-0.3, 0.3);
    return p;
  }

  double eval(const GaussianScene& scene, const Camera& cam) const {
    const splatfuse::RenderOutput out = splatfuse::render(scene, cam);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.color.size(); ++i)
      loss += color_weights[i] * (exposure_a * out.color[i] + exposure_b);
    for (std::size_t i = 0; i < out.depth.size(); ++i) loss += depth_weights[i] * out.depth[i];
    return loss;
  }
};

// Central finite difference of the probe loss along one coordinate.
// Step is relative: h = 1e-4 * max(|theta|, 1).
inline double fd_gradient(const RenderProbe& probe, const GaussianScene& scene,
                          const Coord& coord) {
  auto eval_at = [&](double delta) {
    GaussianScene s = scene;
    Camera cam = probe.camera;
    double a = probe.exposure_a, b = probe.exposure_b;
    switch (coord.kind) {
      case ParamKind::kCenter:
        s.gaussians[coord.gauss].center[coord.comp] += delta;
        break;
      case ParamKind::kLogScale:
        s.gaussians[coord.gauss].log_scales[coord.comp] += delta;
        break;
      case ParamKind::kRotation: {
        Eigen::Quaterniond& q = s.gaussians[coord.gauss].rotation;
        Eigen::Vector4d v(q.w(), q.x(), q.y(), q.z());
        v[coord.comp] += delta;
        q = Eigen::Quaterniond(v[0], v[1], v[2], v[3]);  // normalized inside covariance()
        break;
      }
      case ParamKind::kOpacity:
        s.gaussians[coord.gauss].opacity_logit += delta;
        break;
      case ParamKind::kColor:
        s.gaussians[coord.gauss].color[coord.comp] += delta;
        break;
      case ParamKind::kPoseRot: {
        splatfuse::PoseDelta d;
        d.rot[coord.comp] = delta;
        cam.pose = d.apply_to(cam.pose);
        break;
      }
      case ParamKind::kPoseTrans: {
        splatfuse::PoseDelta d;
        d.trans[coord.comp] = delta;
        cam.pose = d.apply_to(cam.pose);
        break;
      }
      case ParamKind::kExposureA: {
        RenderProbe p2 = probe;
        p2.exposure_a = a + delta;
        return p2.eval(s, cam);
      }
      case ParamKind::kExposureB: {
        RenderProbe p2 = probe;
        p2.exposure_b = b + delta;
        return p2.eval(s, cam);
      }
    }
    RenderProbe p2 = probe;
    return p2.eval(s, cam);
  };

  double base = 0.0;
  switch (coord.kind) {
    case ParamKind::kCenter:
      base = scene.gaussians[coord.gauss].center[coord.comp];
      break;
    case ParamKind::kLogScale:
      base = scene.gaussians[coord.gauss].log_scales[coord.comp];
      break;
    case ParamKind::kOpacity:
      base = scene.gaussians[coord.gauss].opacity_logit;
      break;
    case ParamKind::kColor:
      base = scene.gaussians[coord.gauss].color[coord.comp];
      break;
    case ParamKind::kExposureA:
      base = probe.exposure_a;
      break;
    default:
      base = 0.0;  // rotation components ~1, pose/exposure deltas around 0
  }
  const double h = 1e-4 * std::max(std::abs(base), 1.0);
  return (eval_at(h) - eval_at(-h)) / (2.0 * h);
}

// Analytic gradient along the same coordinate via render_with_gradients.
inline double analytic_gradient(const RenderProbe& probe, const GaussianScene& scene,
                                const Coord& coord) {
  const splatfuse::RenderGrads g = splatfuse::render_with_gradients(
      scene, probe.camera, probe.color_weights, probe.depth_weights, probe.exposure_a,
      probe.exposure_b);
  switch (coord.kind) {
    case ParamKind::kCenter:
      return g.scene.centers[coord.gauss][coord.comp];
    case ParamKind::kLogScale:
      return g.scene.log_scales[coord.gauss][coord.comp];
    case ParamKind::kRotation:
      return g.scene.rotations[coord.gauss][coord.comp];
    case ParamKind::kOpacity:
      return g.scene.opacity_logits[coord.gauss];
    case ParamKind::kColor:
      return g.scene.colors[coord.gauss][coord.comp];
    case ParamKind::kPoseRot:
      return g.pose_rot[coord.comp];
    case ParamKind::kPoseTrans:
      return g.pose_trans[coord.comp];
    case ParamKind::kExposureA:
      return g.exposure_gain;
    case ParamKind::kExposureB:
      return g.exposure_bias;
  }
  return 0.0;
}

// |a - b| <= rel * max(|a|,|b|) + abs_floor
inline bool grad_close(double analytic, double fd, double rel = 0.02, double abs_floor = 1e-7) {
  return std::abs(analytic - fd) <= rel * std::max(std::abs(analytic), std::abs(fd)) + abs_floor;
}

// Draws a random coordinate over all parameter kinds of a scene.
inline Coord random_coord(SeededRng& rng, int gauss_count) {
  const int kind = static_cast<int>(rng.uniform_index(9));
  Coord c;
  c.kind = static_cast<ParamKind>(kind);
  c.gauss = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(gauss_count)));
  switch (c.kind) {
    case ParamKind::kRotation:
      c.comp = static_cast<int>(rng.uniform_index(4));
      break;
    case ParamKind::kOpacity:
    case ParamKind::kExposureA:
    case ParamKind::kExposureB:
      c.comp = 0;
      break;
    default:
      c.comp = static_cast<int>(rng.uniform_index(3));
  }
  return c;
}

// ---------------------------------------------------------------------------
// reference SSIM: direct (non-separable) windowed sums, no optimizations

double reference_ssim(const splatfuse::Image& a, const splatfuse::Image& b);

// ---------------------------------------------------------------------------
// reference quantile: independent linear-interpolation implementation

double reference_quantile(std::vector<double> values, double tau);

// ---------------------------------------------------------------------------
// reference trajectory alignment residual via Eigen::umeyama

double reference_ate(const std::vector<splatfuse::RigidPose>& est,
                     const std::vector<splatfuse::RigidPose>& ref, bool with_scale);

}  // namespace oracles
