#pragma once

#include <cstdint>
#include <vector>

#include "splatfuse/geometry.hpp"
#include "splatfuse/image.hpp"
#include "splatfuse/manage.hpp"
#include "splatfuse/render.hpp"
#include "splatfuse/scene.hpp"

namespace splatfuse {

// Per-view affine photometric correction applied to the rendered image
// before it is compared against the target.
struct ExposureParams {
  double a = 1.0;  // gain, kept positive by optimizing log a
  double b = 0.0;  // bias
};

// Affine map a*I + b. Clamped to [0,1] for display; losses use the
// unclamped values internally.
Image apply_exposure(const Image& image, const ExposureParams& params, bool clamp_output = true);

struct LossWeights {
  double beta = 0.95;         // RGB vs depth
  double lambda_scale = 0.01; // scale regularizer
  double lambda_ssim = 0.2;   // refinement mix
};

// One supervision target. An empty mask means fully trusted (C_m == 1);
// an empty depth disables the depth term for this frame.
struct TrainingFrame {
  Image image;
  Image depth;
  Image mask;
  int view = 0;  // index into the camera / exposure arrays
  bool is_pseudo = false;
};

struct LossBreakdown {
  double total = 0.0;
  double rgb = 0.0;
  double depth = 0.0;
  double scale = 0.0;
  bool empty_mask = false;  // set when the mask nulled the photometric terms
};

// Soft scale cap: 5x the median nearest-neighbor center distance. Computed
// once per optimization stage and passed into the loss so the loss stays a
// clean function of the parameters being differentiated.
double compute_scale_cap(const GaussianScene& scene);

// Scale regularizer: mean over gaussians of max(0, exp(max log_scale) - cap)^2.
double scale_loss(const GaussianScene& scene, double cap);

// Confidence-weighted RGB-D loss. The RGB term is the mask-normalized,
// channel-averaged L1; the depth term excludes pixels whose rendered alpha is
// below the render alpha floor. total = beta*rgb + (1-beta)*depth +
// lambda_scale*scale.
LossBreakdown masked_rgbd_loss(const RenderOutput& rendered, const ExposureParams& exposure,
                               const TrainingFrame& frame, const LossWeights& weights,
                               const GaussianScene& scene, double scale_cap,
                               double alpha_floor = 1e-4);

// Standard SSIM: 11x11 Gaussian window, sigma 1.5, C1=0.01^2, C2=0.03^2 on
// [0,1] data, averaged over valid window centers and channels.
double ssim(const Image& a, const Image& b);
// Same, plus dSSIM/d(b) when grad_b is non-null (size of b.data, doubles).
double ssim_with_grad(const Image& a, const Image& b, std::vector<double>* grad_b);

// Refinement loss (pose-frozen stage): (1-l)*L1 + l*(1-SSIM), both terms
// confidence-weighted; SSIM runs on mask-multiplied images.
double refine_loss(const Image& rendered, const TrainingFrame& frame, double lambda_ssim);

struct DescentOptions {
  int max_backtracks = 14;  // halvings per group before the next fallback
  int stall_abort = 20;     // consecutive stalled iterations before aborting
};

struct StabilizeOptions {
  int iterations = 400;
  double lr_rot = 3e-2;
  double lr_trans = 3e-2;
  double lr_exposure = 1e-2;
  bool optimize_exposure = true;
  LossWeights weights;
  DescentOptions descent;
};

struct StabilizeResult {
  std::vector<PoseDelta> deltas;            // per camera, identity when unobserved
  std::vector<ExposureParams> exposures;    // per camera
  std::vector<Camera> cameras;              // base cameras with deltas applied
  std::vector<std::vector<double>> histories;  // per optimized view
};

// Stage 1: per-view pose-delta + exposure descent against a fixed scene.
// Adagrad-style per-parameter scaling with a backtracking line search; the
// per-view loss history is monotonically non-increasing.
StabilizeResult stabilize_poses(const GaussianScene& scene,
                                const std::vector<TrainingFrame>& frames,
                                const std::vector<Camera>& cameras,
                                const StabilizeOptions& opts = {});

struct GaussianLearningRates {
  double center = 2e-3;
  double log_scale = 5e-3;
  double rotation = 2e-3;
  double opacity = 2e-2;
  double color = 1e-2;
};

struct JointOptions {
  int iterations = 150;
  GaussianLearningRates lr;
  double lr_pose_rot = 1e-3;
  double lr_pose_trans = 1e-3;
  double lr_exposure = 5e-3;
  bool optimize_poses = true;
  bool optimize_exposure = true;
  LossWeights weights;
  int spgm_every = 0;  // 0 disables in-schedule management passes
  ManageParams spgm;
  uint64_t seed = 0;
  DescentOptions descent;
};

struct IterationStats {
  int iter = 0;
  double total = 0.0, rgb = 0.0, depth = 0.0, scale = 0.0;
};

struct JointResult {
  std::vector<IterationStats> history;
  int spgm_passes = 0;
  int gaussians_dropped = 0;
};

// Stage 2: simultaneous descent on gaussian parameters, pose deltas and
// exposures under the weighted RGB-D loss, with optional scheduled
// management passes. Mutates scene/cameras/exposures in place.
JointResult joint_optimize(GaussianScene& scene, std::vector<Camera>& cameras,
                           std::vector<ExposureParams>& exposures,
                           const std::vector<TrainingFrame>& frames, const JointOptions& opts);

struct RefineOptions {
  int iterations = 100;
  GaussianLearningRates lr;
  double lambda_ssim = 0.2;
  DescentOptions descent;
};

// Stage 3: gaussian-only appearance refinement under L1 + SSIM, poses and
// exposures frozen.
JointResult refine(GaussianScene& scene, const std::vector<Camera>& cameras,
                   const std::vector<ExposureParams>& exposures,
                   const std::vector<TrainingFrame>& frames, const RefineOptions& opts);

void save_history_csv(const std::vector<IterationStats>& history,
                      const std::filesystem::path& path);

}  // namespace splatfuse
