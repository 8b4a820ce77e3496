#include "splatfuse/confmask.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "splatfuse/common.hpp"
#include "splatfuse/parallel.hpp"

namespace splatfuse {

namespace {

// Grayscale plus per-position patch statistics for ZNCC.
struct PatchField {
  int width = 0, height = 0, radius = 0;
  std::vector<double> gray;     // W*H
  std::vector<double> sum;      // patch sum at each valid center, else 0
  std::vector<double> sqdev;    // patch sum of squared deviations

  double g(int x, int y) const { return gray[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const {
    return x >= radius && x < width - radius && y >= radius && y < height - radius;
  }
};

PatchField build_field(const Image& img, int radius) {
  PatchField f;
  f.width = img.width;
  f.height = img.height;
  f.radius = radius;
  f.gray.resize(img.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      f.gray[static_cast<std::size_t>(y) * img.width + x] = img.luminance(x, y);

  // integral images over gray and gray^2
  const int W = img.width + 1, H = img.height + 1;
  std::vector<double> I(static_cast<std::size_t>(W) * H, 0.0), I2(I);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = f.g(x, y);
      const std::size_t idx = static_cast<std::size_t>(y + 1) * W + (x + 1);
      I[idx] = v + I[idx - 1] + I[idx - W] - I[idx - W - 1];
      I2[idx] = v * v + I2[idx - 1] + I2[idx - W] - I2[idx - W - 1];
    }
  auto box = [&](const std::vector<double>& S, int x0, int y0, int x1, int y1) {
    return S[static_cast<std::size_t>(y1 + 1) * W + (x1 + 1)] -
           S[static_cast<std::size_t>(y0) * W + (x1 + 1)] -
           S[static_cast<std::size_t>(y1 + 1) * W + x0] + S[static_cast<std::size_t>(y0) * W + x0];
  };

  const int n = (2 * radius + 1) * (2 * radius + 1);
  f.sum.assign(img.pixel_count(), 0.0);
  f.sqdev.assign(img.pixel_count(), 0.0);
  for (int y = radius; y < img.height - radius; ++y)
    for (int x = radius; x < img.width - radius; ++x) {
      const double s = box(I, x - radius, y - radius, x + radius, y + radius);
      const double s2 = box(I2, x - radius, y - radius, x + radius, y + radius);
      const std::size_t idx = static_cast<std::size_t>(y) * img.width + x;
      f.sum[idx] = s;
      f.sqdev[idx] = std::max(0.0, s2 - s * s / n);
    }
  return f;
}

constexpr double kVarFloor = 1e-12;  // patches flatter than this never match

// Best ZNCC partner of (xa, ya) in field b; returns score, writes position.
// search_center limits the scan when max_displacement >= 0.
double best_partner(const PatchField& a, int xa, int ya, const PatchField& b, int cx, int cy,
                    int max_disp, int* bx, int* by) {
  const int r = a.radius;
  const int n = (2 * r + 1) * (2 * r + 1);
  const std::size_t ia = static_cast<std::size_t>(ya) * a.width + xa;
  const double va = a.sqdev[ia];
  if (va < kVarFloor) return -2.0;
  const double mean_a = a.sum[ia] / n;
  const double inv_sa = 1.0 / std::sqrt(va);

  // centered source patch
  double ac[49 * 4];  // large enough for radius <= 6
  int k = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) ac[k++] = a.g(xa + dx, ya + dy) - mean_a;

  int x_lo = r, x_hi = b.width - 1 - r, y_lo = r, y_hi = b.height - 1 - r;
  if (max_disp >= 0) {
    x_lo = std::max(x_lo, cx - max_disp);
    x_hi = std::min(x_hi, cx + max_disp);
    y_lo = std::max(y_lo, cy - max_disp);
    y_hi = std::min(y_hi, cy + max_disp);
  }

  double best = -2.0;
  int best_x = -1, best_y = -1;
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const std::size_t ib = static_cast<std::size_t>(y) * b.width + x;
      const double vb = b.sqdev[ib];
      if (vb < kVarFloor) continue;
      double cross = 0.0;
      int j = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const double* row = &b.gray[static_cast<std::size_t>(y + dy) * b.width + (x - r)];
        for (int dx = 0; dx <= 2 * r; ++dx) cross += ac[j++] * row[dx];
      }
      const double zncc = cross * inv_sa / std::sqrt(vb);
      if (zncc > best) {
        best = zncc;
        best_x = x;
        best_y = y;
      }
    }
  }
  *bx = best_x;
  *by = best_y;
  return best;
}

}  // namespace

CorrespondenceSet match_patches(const Image& img_a, const Image& img_b, const MatchParams& params) {
  if (params.grid_stride < 1) throw DataError("match_patches: grid_stride must be >= 1");
  if (img_a.channels != img_b.channels)
    throw DataError("match_patches: images must share the color space");
  const int r = params.patch_radius;
  if (r < 1 || r > 6) throw DataError("match_patches: patch_radius out of range [1,6]");
  if (2 * r + 1 > img_a.width || 2 * r + 1 > img_a.height || 2 * r + 1 > img_b.width ||
      2 * r + 1 > img_b.height)
    throw DataError("match_patches: patch_radius too large for image");

  const PatchField fa = build_field(img_a, r);
  const PatchField fb = build_field(img_b, r);

  std::vector<int> kx, ky;
  for (int y = r; y < img_a.height - r; y += params.grid_stride)
    for (int x = r; x < img_a.width - r; x += params.grid_stride) {
      kx.push_back(x);
      ky.push_back(y);
    }

  std::vector<Correspondence> slots(kx.size());
  std::vector<char> keep(kx.size(), 0);
  parallel_for(kx.size(), [&](std::size_t i) {
    int bx, by;
    const double fwd = best_partner(fa, kx[i], ky[i], fb, kx[i], ky[i], params.max_displacement,
                                    &bx, &by);
    if (fwd < params.min_zncc) return;
    int rx, ry;
    best_partner(fb, bx, by, fa, bx, by, params.max_displacement, &rx, &ry);
    if (rx != kx[i] || ry != ky[i]) return;  // not mutual-best
    slots[i] = {kx[i], ky[i], bx, by, fwd};
    keep[i] = 1;
  });

  CorrespondenceSet out;
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (keep[i]) out.matches.push_back(slots[i]);
  return out;
}

Image infer_mask(const CorrespondenceSet& m_prev, const CorrespondenceSet& m_next, int width,
                 int height, double support_radius) {
  Image mask(width, height, 1);
  const double r2 = support_radius * support_radius;
  auto covered = [&](const CorrespondenceSet& set, int x, int y) {
    for (const Correspondence& m : set.matches) {
      const double dx = m.xs - x, dy = m.ys - y;
      if (dx * dx + dy * dy <= r2) return true;
    }
    return false;
  };
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < width; ++x) {
      const bool in_prev = covered(m_prev, x, y);
      const bool in_next = covered(m_next, x, y);
      mask.at(x, y) = in_prev && in_next ? 1.0f : (in_prev || in_next ? 0.5f : 0.0f);
    }
  });
  return mask;
}

void save_correspondences_csv(const CorrespondenceSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write correspondences: " + path.string());
  char line[128];
  for (const Correspondence& m : set.matches) {
    std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.9g\n", m.xs, m.ys, m.xr, m.yr, m.score);
    out << line;
  }
}

CorrespondenceSet load_correspondences_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open correspondences: " + path.string());
  CorrespondenceSet set;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Correspondence m;
    char comma;
    std::istringstream ls(line);
    ls >> m.xs >> comma >> m.ys >> comma >> m.xr >> comma >> m.yr >> comma >> m.score;
    if (!ls) throw DataError("bad correspondence CSV at " + path.string() + ":" + std::to_string(lineno));
    set.matches.push_back(m);
  }
  return set;
}

void save_mask_png(const Image& mask, const std::filesystem::path& path) {
  if (mask.channels != 1) throw DataError("mask must be single-channel");
  Image bytes(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    const float v = mask.data[i];
    if (v == 0.0f)
      bytes.data[i] = 0.0f;
    else if (v == 0.5f)
      bytes.data[i] = 128.0f / 255.0f;
    else if (v == 1.0f)
      bytes.data[i] = 1.0f;
    else
      throw DataError("mask value outside {0, 0.5, 1}");
  }
  save_png(bytes, path);
}

Image load_mask_png(const std::filesystem::path& path) {
  Image bytes = load_png(path);
  if (bytes.channels != 1) throw DataError("mask PNG must be grayscale: " + path.string());
  Image mask(bytes.width, bytes.height, 1);
  for (std::size_t i = 0; i < bytes.data.size(); ++i) {
    const int b = static_cast<int>(std::lround(bytes.data[i] * 255.0f));
    if (b == 0)
      mask.data[i] = 0.0f;
    else if (b == 128)
      mask.data[i] = 0.5f;
    else if (b == 255)
      mask.data[i] = 1.0f;
    else
      throw DataError("mask PNG byte " + std::to_string(b) + " is not in {0,128,255}: " +
                      path.string());
  }
  return mask;
}

}  // namespace splatfuse
