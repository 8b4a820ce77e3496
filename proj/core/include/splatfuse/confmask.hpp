#pragma once

#include <filesystem>
#include <vector>

#include "splatfuse/image.hpp"

namespace splatfuse {

struct Correspondence {
  int xs = 0, ys = 0;  // source pixel
  int xr = 0, yr = 0;  // reference pixel
  double score = 0.0;  // ZNCC in [-1, 1]
};

struct CorrespondenceSet {
  std::vector<Correspondence> matches;
};

struct MatchParams {
  int grid_stride = 4;
  int patch_radius = 3;          // 7x7 patches
  double min_zncc = 0.8;
  int max_displacement = -1;     // -1: search the full image
};

// Deterministic ZNCC matcher on grayscale (channel-mean) patches. Keypoints
// sit on a regular grid in img_a; the best partner is searched exhaustively
// in img_b, then verified mutual-best back in img_a. Zero-variance patches
// never match.
CorrespondenceSet match_patches(const Image& img_a, const Image& img_b,
                                const MatchParams& params = {});

// Three-level mask: a pixel belongs to a correspondence set when its distance
// to the nearest source pixel of that set is <= support_radius. In both sets
// -> 1.0, exactly one -> 0.5, neither -> 0.0.
Image infer_mask(const CorrespondenceSet& m_prev, const CorrespondenceSet& m_next, int width,
                 int height, double support_radius = 8.0);

// CSV lines "xs,ys,xr,yr,score".
void save_correspondences_csv(const CorrespondenceSet& set, const std::filesystem::path& path);
CorrespondenceSet load_correspondences_csv(const std::filesystem::path& path);

// Mask PNG: {0 -> 0, 0.5 -> 128, 1.0 -> 255}; the loader inverts exactly and
// rejects any other byte value.
void save_mask_png(const Image& mask, const std::filesystem::path& path);
Image load_mask_png(const std::filesystem::path& path);

}  // namespace splatfuse
