#pragma once

#include <span>

#include "splatfuse/geometry.hpp"
#include "splatfuse/image.hpp"

namespace splatfuse {

// 10*log10(1/MSE) over all pixels and channels; identical images report the
// +infinity sentinel.
double psnr(const Image& a, const Image& b);

enum class AteAlignment { kSimilarity, kRigid };

struct AteResult {
  double rmse = 0.0;
  AteAlignment requested = AteAlignment::kSimilarity;
  bool degenerate = false;  // zero-spread trajectory forced the rigid fallback
  double scale = 1.0;       // fitted scale (1 for rigid)
};

// Absolute trajectory error: closed-form alignment of the camera positions
// (SVD/Umeyama, similarity by default), then the RMSE of the residuals.
AteResult ate_rmse(std::span<const RigidPose> estimated, std::span<const RigidPose> reference,
                   AteAlignment alignment = AteAlignment::kSimilarity);

}  // namespace splatfuse
