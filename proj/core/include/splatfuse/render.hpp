#pragma once

#include <Eigen/Dense>
#include <vector>

#include "splatfuse/geometry.hpp"
#include "splatfuse/image.hpp"
#include "splatfuse/scene.hpp"

namespace splatfuse {

struct RenderOptions {
  double z_near = kDefaultZNear;
  double alpha_floor = 1e-4;   // below this accumulated alpha, depth reads 0
  double dilation = 0.3;       // screen-space variance added to the 2D footprint (px^2)
  double sigma_cut = 3.0;      // per-axis bounding-box extent in screen sigmas
};

// Forward-splatting output. Buffers are double precision so losses and
// finite-difference probes are not limited by float rounding.
struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<double> color;  // H*W*3, row-major
  std::vector<double> depth;  // H*W, alpha-weighted mean camera depth, 0 where unresolved
  std::vector<double> alpha;  // H*W accumulated opacity in [0,1]

  double& color_at(int x, int y, int c) { return color[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double color_at(int x, int y, int c) const { return color[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double& depth_at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
  double depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  double alpha_at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }

  Image color_image() const;  // float RGB
  Image depth_image() const;  // float single channel
  Image alpha_image() const;
};

// EWA forward splatting: project centers, push the 3D covariance through the
// projection Jacobian, composite front-to-back in (depth, id) order.
RenderOutput render(const GaussianScene& scene, const Camera& camera,
                    const RenderOptions& opts = {});

struct SceneGrads {
  std::vector<Eigen::Vector3d> centers;
  std::vector<Eigen::Vector3d> log_scales;
  std::vector<Eigen::Vector4d> rotations;  // (w,x,y,z), tangent to normalization
  std::vector<double> opacity_logits;
  std::vector<Eigen::Vector3d> colors;

  void resize(std::size_t n);
  void setZero();
  void add(const SceneGrads& other);
};

struct RenderGrads {
  SceneGrads scene;
  Eigen::Vector3d pose_rot = Eigen::Vector3d::Zero();    // left-multiplicative so(3) delta
  Eigen::Vector3d pose_trans = Eigen::Vector3d::Zero();  // translation delta
  double exposure_gain = 0.0;                            // d/da
  double exposure_bias = 0.0;                            // d/db
};

// Backpropagates a pixel-space loss gradient through exposure and the
// splatting pipeline. color_grad is dL/d(a*C+b) with shape H*W*3; depth_grad
// is dL/dD with shape H*W (may be empty for color-only losses). When
// forward_out is non-null the forward result is written there.
RenderGrads render_with_gradients(const GaussianScene& scene, const Camera& camera,
                                  const std::vector<double>& color_grad,
                                  const std::vector<double>& depth_grad,
                                  double exposure_gain = 1.0, double exposure_bias = 0.0,
                                  const RenderOptions& opts = {},
                                  RenderOutput* forward_out = nullptr);

}  // namespace splatfuse
