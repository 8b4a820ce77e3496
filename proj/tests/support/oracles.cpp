#include "oracles.hpp"

#include <algorithm>

namespace oracles {

double reference_ssim(const splatfuse::Image& a, const splatfuse::Image& b) {
  const int r = 5;
  const double sigma = 1.5;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  // full 2D window, normalized
  double win[11][11];
  double wsum = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      win[dy + r][dx + r] = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
      wsum += win[dy + r][dx + r];
    }
  for (auto& row : win)
    for (double& w : row) w /= wsum;

  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = r; y < a.height - r; ++y)
      for (int x = r; x < a.width - r; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double w = win[dy + r][dx + r];
            const double va = a.at(x + dx, y + dy, c);
            const double vb = b.at(x + dx, y + dy, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double var_a = saa - ma * ma;
        const double var_b = sbb - mb * mb;
        const double cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

double reference_quantile(std::vector<double> values, double tau) {
  std::sort(values.begin(), values.end());
  const double pos = tau * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

double reference_ate(const std::vector<splatfuse::RigidPose>& est,
                     const std::vector<splatfuse::RigidPose>& ref, bool with_scale) {
  const std::size_t n = est.size();
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    src.col(i) = est[i].center();
    dst.col(i) = ref[i].center();
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, with_scale);
  double se = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d mapped = T.topLeftCorner<3, 3>() * src.col(i) + T.topRightCorner<3, 1>();
    se += (dst.col(i) - mapped).squaredNorm();
  }
  return std::sqrt(se / static_cast<double>(n));
}

}  // namespace oracles
