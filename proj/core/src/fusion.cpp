#include "splatfuse/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "splatfuse/common.hpp"
#include "splatfuse/parallel.hpp"

namespace splatfuse {

OverlapResult overlap_score(const Camera& cam_a, const Image& depth_a, const Camera& cam_b,
                            const Image& depth_b, double eps) {
  if (depth_a.channels != 1 || depth_b.channels != 1)
    throw DataError("overlap_score: depth maps must be single-channel");
  if (depth_a.width != cam_a.intrinsics.width || depth_a.height != cam_a.intrinsics.height ||
      depth_b.width != cam_b.intrinsics.width || depth_b.height != cam_b.intrinsics.height)
    throw DataError("overlap_score: depth map size does not match its camera");

  const int w = depth_a.width, h = depth_a.height;
  OverlapResult out;
  out.overlap_mask = Image(w, h, 1);
  out.depth_score = Image(w, h, 1);
  out.confidence = Image(w, h, 1);
  out.pose_score = std::exp(-(cam_a.pose.t - cam_b.pose.t).norm());

  parallel_for(static_cast<std::size_t>(h), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      const double da = depth_a.at(x, y);
      if (!(da > eps)) continue;
      const auto pb = reproject_pixel(cam_a, cam_b, {static_cast<double>(x), static_cast<double>(y)}, da);
      if (!pb) continue;
      // nearest-neighbor lookup; bilinear across depth edges fabricates depths
      const int xb = static_cast<int>(std::lround(pb->pixel.x()));
      const int yb = static_cast<int>(std::lround(pb->pixel.y()));
      if (xb < 0 || xb >= depth_b.width || yb < 0 || yb >= depth_b.height) continue;
      const double db = depth_b.at(xb, yb);
      if (!(db > eps)) continue;
      out.overlap_mask.at(x, y) = 1.0f;
      const double sd = std::exp(-std::abs(da - db) / ((da + db) * 0.5 + eps));
      out.depth_score.at(x, y) = static_cast<float>(sd);
      out.confidence.at(x, y) = static_cast<float>(sd * out.pose_score);
    }
  });
  return out;
}

FusionResult fuse_bidirectional(const FusionInput& input, FusionMode mode, double eps) {
  const Image& base = input.base;
  if (!base.same_shape(input.candidate_prev) || !base.same_shape(input.candidate_next))
    throw DataError("fuse: base and candidates must share dimensions");
  if (input.depth_t.width != base.width || input.depth_t.height != base.height)
    throw DataError("fuse: depth_t does not match the base image");

  FusionResult out;
  out.overlap_prev = overlap_score(input.cam_t, input.depth_t, input.cam_prev, input.depth_prev, eps);
  out.overlap_next = overlap_score(input.cam_t, input.depth_t, input.cam_next, input.depth_next, eps);

  const int w = base.width, h = base.height;
  out.fused = Image(w, h, base.channels);
  out.weight_prev = Image(w, h, 1);
  out.weight_next = Image(w, h, 1);

  parallel_for(static_cast<std::size_t>(h), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      double c1 = out.overlap_prev.confidence.at(x, y);
      double c2 = out.overlap_next.confidence.at(x, y);
      if (mode == FusionMode::kPrevOnly) c2 = 0.0;
      if (mode == FusionMode::kNextOnly) c1 = 0.0;
      const double denom = c1 + c2 + eps;
      const double w1 = c1 / denom;
      const double w2 = c2 / denom;
      out.weight_prev.at(x, y) = static_cast<float>(w1);
      out.weight_next.at(x, y) = static_cast<float>(w2);
      for (int c = 0; c < base.channels; ++c) {
        const double b = base.at(x, y, c);
        const double r1 = input.candidate_prev.at(x, y, c) - b;
        const double r2 = input.candidate_next.at(x, y, c) - b;
        out.fused.at(x, y, c) =
            static_cast<float>(std::clamp(b + w1 * r1 + w2 * r2, 0.0, 1.0));
      }
    }
  });
  return out;
}

}  // namespace splatfuse
