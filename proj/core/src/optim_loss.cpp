#include <algorithm>
#include <cmath>
#include <fstream>

#include "optim_detail.hpp"
#include "splatfuse/common.hpp"
#include "splatfuse/optim.hpp"

namespace splatfuse {

Image apply_exposure(const Image& image, const ExposureParams& params, bool clamp_output) {
  Image out = image;
  for (float& v : out.data) {
    const double mapped = params.a * v + params.b;
    v = static_cast<float>(clamp_output ? std::clamp(mapped, 0.0, 1.0) : mapped);
  }
  return out;
}

double compute_scale_cap(const GaussianScene& scene) {
  if (scene.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> nn(scene.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (std::size_t j = i + 1; j < scene.size(); ++j) {
      const double d2 = (scene.gaussians[i].center - scene.gaussians[j].center).squaredNorm();
      nn[i] = std::min(nn[i], d2);
      nn[j] = std::min(nn[j], d2);
    }
  }
  std::vector<double> dist(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) dist[i] = std::sqrt(nn[i]);
  std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
  return 5.0 * dist[dist.size() / 2];
}

double scale_loss(const GaussianScene& scene, double cap) {
  if (scene.empty() || !std::isfinite(cap)) return 0.0;
  double sum = 0.0;
  for (const Gaussian& g : scene.gaussians) {
    const double s_max = std::exp(g.log_scales.maxCoeff());
    const double h = s_max - cap;
    if (h > 0.0) sum += h * h;
  }
  return sum / static_cast<double>(scene.size());
}

double detail::scale_loss_grad(const GaussianScene& scene, double cap,
                               std::vector<Eigen::Vector3d>& grad) {
  grad.assign(scene.size(), Eigen::Vector3d::Zero());
  if (scene.empty() || !std::isfinite(cap)) return 0.0;
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::Vector3d& s = scene.gaussians[i].log_scales;
    int arg = 0;
    s.maxCoeff(&arg);
    const double s_max = std::exp(s[arg]);
    const double h = s_max - cap;
    if (h > 0.0) {
      sum += h * h;
      grad[i][arg] = inv_n * 2.0 * h * s_max;
    }
  }
  return sum * inv_n;
}

namespace {

double mask_value(const Image& mask, int x, int y) {
  return mask.empty() ? 1.0 : static_cast<double>(mask.at(x, y));
}

}  // namespace

LossBreakdown masked_rgbd_loss(const RenderOutput& rendered, const ExposureParams& exposure,
                               const TrainingFrame& frame, const LossWeights& weights,
                               const GaussianScene& scene, double scale_cap, double alpha_floor) {
  const Image& target = frame.image;
  if (target.width != rendered.width || target.height != rendered.height || target.channels != 3)
    throw DataError("masked_rgbd_loss: target image does not match the render");
  if (!frame.mask.empty() &&
      (frame.mask.width != target.width || frame.mask.height != target.height))
    throw DataError("masked_rgbd_loss: mask size mismatch");
  if (!frame.depth.empty() &&
      (frame.depth.width != target.width || frame.depth.height != target.height))
    throw DataError("masked_rgbd_loss: depth size mismatch");

  double rgb_num = 0.0, rgb_den = 0.0;
  double d_num = 0.0, d_den = 0.0;
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      const double m = mask_value(frame.mask, x, y);
      double err = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double rendered_px =
            exposure.a * rendered.color_at(x, y, c) + exposure.b;
        err += std::abs(target.at(x, y, c) - rendered_px);
      }
      rgb_num += m * (err / 3.0);
      rgb_den += m;
      if (!frame.depth.empty() && rendered.alpha_at(x, y) >= alpha_floor) {
        d_num += m * std::abs(frame.depth.at(x, y) - rendered.depth_at(x, y));
        d_den += m;
      }
    }
  }

  LossBreakdown out;
  out.rgb = rgb_den > 0.0 ? rgb_num / rgb_den : 0.0;
  out.depth = d_den > 0.0 ? d_num / d_den : 0.0;
  out.empty_mask = (rgb_den == 0.0);
  out.scale = scale_loss(scene, scale_cap);
  out.total = weights.beta * out.rgb + (1.0 - weights.beta) * out.depth +
              weights.lambda_scale * out.scale;
  return out;
}

namespace {

constexpr int kSsimRadius = 5;  // 11x11 window
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

const std::vector<double>& ssim_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(2 * kSsimRadius + 1);
    double sum = 0.0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
      v[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
      sum += v[i + kSsimRadius];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return k;
}

// Separable valid-region convolution of a single-channel double image.
// Output has size (W-2r) x (H-2r), indexed by window center offset by r.
void sep_conv_valid(const std::vector<double>& in, int w, int h, std::vector<double>& out) {
  const auto& k = ssim_kernel();
  const int r = kSsimRadius;
  const int ow = w - 2 * r, oh = h - 2 * r;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);  // horizontal pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 2 * r + 1; ++i) s += k[i] * in[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  out.assign(static_cast<std::size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 2 * r + 1; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
}

// Adjoint of sep_conv_valid: spreads window-center values back to pixels.
void sep_conv_adjoint(const std::vector<double>& in, int w, int h, std::vector<double>& out) {
  const auto& k = ssim_kernel();
  const int r = kSsimRadius;
  const int ow = w - 2 * r, oh = h - 2 * r;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);  // vertical adjoint
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double v = in[static_cast<std::size_t>(y) * ow + x];
      if (v == 0.0) continue;
      for (int i = 0; i < 2 * r + 1; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += k[i] * v;
    }
  out.assign(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<std::size_t>(y) * ow + x];
      if (v == 0.0) continue;
      for (int i = 0; i < 2 * r + 1; ++i) out[static_cast<std::size_t>(y) * w + x + i] += k[i] * v;
    }
}

// SSIM over one channel given double buffers; optionally accumulates
// dSSIM/db into grad_b (same size as the channel). Returns the channel sum
// over window centers (caller divides by center count and channel count).
double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int w, int h,
                    std::vector<double>* grad_b) {
  const int r = kSsimRadius;
  const int ow = w - 2 * r, oh = h - 2 * r;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  std::vector<double> mu_a, mu_b, s_aa, s_bb, s_ab;
  sep_conv_valid(a, w, h, mu_a);
  sep_conv_valid(b, w, h, mu_b);
  sep_conv_valid(aa, w, h, s_aa);
  sep_conv_valid(bb, w, h, s_bb);
  sep_conv_valid(ab, w, h, s_ab);

  const std::size_t q = static_cast<std::size_t>(ow) * oh;
  std::vector<double> c_mb, c_sbb, c_sab;
  if (grad_b) {
    c_mb.assign(q, 0.0);
    c_sbb.assign(q, 0.0);
    c_sab.assign(q, 0.0);
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma;
    const double vb = s_bb[i] - mb * mb;
    const double cov = s_ab[i] - ma * mb;
    const double A1 = 2.0 * ma * mb + kSsimC1;
    const double A2 = 2.0 * cov + kSsimC2;
    const double B1 = ma * ma + mb * mb + kSsimC1;
    const double B2 = va + vb + kSsimC2;
    const double S = (A1 * A2) / (B1 * B2);
    sum += S;
    if (grad_b) {
      const double dA1 = A2 / (B1 * B2);
      const double dA2 = A1 / (B1 * B2);
      const double dB1 = -S / B1;
      const double dB2 = -S / B2;
      // raw-sum parametrization: mb, s_bb, s_ab
      c_mb[i] = dA1 * 2.0 * ma + dA2 * (-2.0 * ma) + dB1 * 2.0 * mb + dB2 * (-2.0 * mb);
      c_sbb[i] = dB2;
      c_sab[i] = 2.0 * dA2;
    }
  }

  if (grad_b) {
    std::vector<double> g1, g2, g3;
    sep_conv_adjoint(c_mb, w, h, g1);
    sep_conv_adjoint(c_sbb, w, h, g2);
    sep_conv_adjoint(c_sab, w, h, g3);
    grad_b->assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      (*grad_b)[i] = g1[i] + 2.0 * b[i] * g2[i] + a[i] * g3[i];
  }
  return sum;
}

}  // namespace

double detail::ssim_multichannel(const std::vector<double>& a, const std::vector<double>& b,
                                 int w, int h, int ch, std::vector<double>* grad_b) {
  if (w < 2 * kSsimRadius + 1 || h < 2 * kSsimRadius + 1)
    throw DataError("ssim: image smaller than the 11x11 window");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (a.size() != n * ch || b.size() != n * ch) throw DataError("ssim: buffer size mismatch");
  if (grad_b) grad_b->assign(n * ch, 0.0);

  std::vector<double> ca(n), cb(n), cg;
  double total = 0.0;
  const std::size_t q = static_cast<std::size_t>(w - 2 * kSsimRadius) * (h - 2 * kSsimRadius);
  for (int c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      ca[i] = a[i * ch + c];
      cb[i] = b[i * ch + c];
    }
    total += ssim_channel(ca, cb, w, h, grad_b ? &cg : nullptr);
    if (grad_b) {
      const double scale = 1.0 / (static_cast<double>(q) * ch);
      for (std::size_t i = 0; i < n; ++i) (*grad_b)[i * ch + c] = cg[i] * scale;
    }
  }
  return total / (static_cast<double>(q) * ch);
}

double ssim_with_grad(const Image& a, const Image& b, std::vector<double>* grad_b) {
  if (!a.same_shape(b)) throw DataError("ssim: image shapes differ");
  std::vector<double> da(a.data.begin(), a.data.end());
  std::vector<double> db(b.data.begin(), b.data.end());
  return detail::ssim_multichannel(da, db, a.width, a.height, a.channels, grad_b);
}

double ssim(const Image& a, const Image& b) { return ssim_with_grad(a, b, nullptr); }

namespace {

Image masked_copy(const Image& img, const Image& mask) {
  if (mask.empty()) return img;
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) *= mask.at(x, y);
  return out;
}

}  // namespace

double refine_loss(const Image& rendered, const TrainingFrame& frame, double lambda_ssim) {
  const Image& target = frame.image;
  if (!rendered.same_shape(target)) throw DataError("refine_loss: image shapes differ");

  double l1_num = 0.0, l1_den = 0.0;
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      const double m = mask_value(frame.mask, x, y);
      double err = 0.0;
      for (int c = 0; c < target.channels; ++c)
        err += std::abs(static_cast<double>(target.at(x, y, c)) - rendered.at(x, y, c));
      l1_num += m * (err / target.channels);
      l1_den += m;
    }
  const double l1 = l1_den > 0.0 ? l1_num / l1_den : 0.0;
  if (lambda_ssim == 0.0) return l1;

  const double s = ssim(masked_copy(target, frame.mask), masked_copy(rendered, frame.mask));
  return (1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s);
}

void save_history_csv(const std::vector<IterationStats>& history,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history: " + path.string());
  out << "iter,total,rgb,depth,scale\n";
  char line[160];
  for (const IterationStats& s : history) {
    std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g,%.12g\n", s.iter, s.total, s.rgb,
                  s.depth, s.scale);
    out << line;
  }
}

}  // namespace splatfuse
