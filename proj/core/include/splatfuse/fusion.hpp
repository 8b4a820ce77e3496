#pragma once

#include "splatfuse/geometry.hpp"
#include "splatfuse/image.hpp"

namespace splatfuse {

inline constexpr double kFusionEps = 1e-6;

// Per-pixel cross-view consistency of view a against view b.
struct OverlapResult {
  Image overlap_mask;  // 1 channel, {0,1}
  Image depth_score;   // 1 channel, [0,1]
  double pose_score = 0.0;
  Image confidence;    // depth_score * pose_score on the mask, 0 elsewhere
};

// Reprojects every valid-depth pixel of view a into view b (nearest-neighbor
// depth lookup on b) and scores depth agreement and camera-translation
// proximity. Depth maps are single-channel and registered to their cameras.
OverlapResult overlap_score(const Camera& cam_a, const Image& depth_a, const Camera& cam_b,
                            const Image& depth_b, double eps = kFusionEps);

enum class FusionMode { kBidirectional, kPrevOnly, kNextOnly };

struct FusionInput {
  Image base;            // the frame being repaired
  Image candidate_prev;  // restoration conditioned on the previous reference
  Image candidate_next;  // restoration conditioned on the next reference
  Image depth_t;         // depth of the base view
  Camera cam_t, cam_prev, cam_next;
  Image depth_prev, depth_next;  // depths of the reference views
};

struct FusionResult {
  Image fused;
  Image weight_prev;  // W1
  Image weight_next;  // W2
  OverlapResult overlap_prev;
  OverlapResult overlap_next;
};

// Confidence-weighted residual blending. Residuals r_i = candidate_i - base
// are mixed with weights W_i = C_i / (C_1 + C_2 + eps); output clamped to
// [0,1]. Single-reference modes zero out the other candidate's confidence.
FusionResult fuse_bidirectional(const FusionInput& input,
                                FusionMode mode = FusionMode::kBidirectional,
                                double eps = kFusionEps);

}  // namespace splatfuse
