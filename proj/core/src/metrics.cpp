#include "splatfuse/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "splatfuse/common.hpp"

namespace splatfuse {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DataError("psnr: image shapes differ");
  if (a.empty()) throw DataError("psnr: empty images");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

AteResult ate_rmse(std::span<const RigidPose> estimated, std::span<const RigidPose> reference,
                   AteAlignment alignment) {
  if (estimated.size() != reference.size())
    throw DataError("ate_rmse: trajectory lengths differ");
  const std::size_t n = estimated.size();
  if (n < 3) throw DataError("ate_rmse: need at least 3 poses");

  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    src.col(i) = estimated[i].center();
    dst.col(i) = reference[i].center();
  }

  const Eigen::Vector3d mu_s = src.rowwise().mean();
  const Eigen::Vector3d mu_d = dst.rowwise().mean();
  const Eigen::Matrix3Xd cs = src.colwise() - mu_s;
  const Eigen::Matrix3Xd cd = dst.colwise() - mu_d;

  const double var_s = cs.squaredNorm() / static_cast<double>(n);
  AteResult out;
  out.requested = alignment;

  // cross-covariance and its SVD give the optimal rotation
  const Eigen::Matrix3d H = cd * cs.transpose() / static_cast<double>(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) S(2, 2) = -1.0;
  const Eigen::Matrix3d R = svd.matrixU() * S * svd.matrixV().transpose();

  double scale = 1.0;
  if (alignment == AteAlignment::kSimilarity) {
    if (var_s < 1e-12) {
      out.degenerate = true;  // zero spread: scale undefined, fall back to rigid
    } else {
      scale = (svd.singularValues().asDiagonal() * S).trace() / var_s;
    }
  }
  out.scale = scale;

  const Eigen::Vector3d t = mu_d - scale * (R * mu_s);
  double se = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d r = dst.col(i) - (scale * (R * src.col(i)) + t);
    se += r.squaredNorm();
  }
  out.rmse = std::sqrt(se / static_cast<double>(n));
  return out;
}

}  // namespace splatfuse
