#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "splatfuse/common.hpp"

namespace splatfuse {

// SH degree-0 basis constant; converts between stored f_dc and plain RGB.
inline constexpr double kShC0 = 0.28209479177387814;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Anisotropic 3D Gaussian primitive.
struct Gaussian {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scales = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();  // (w,x,y,z)
  double opacity_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();  // RGB in [0,1]

  double opacity() const { return sigmoid(opacity_logit); }
  // Sigma = R diag(exp(2*log_scales)) R^T; SPD by construction.
  Eigen::Matrix3d covariance() const;
};

// Ordered Gaussian collection with stable integer ids. Ids survive pruning,
// so drop logs and importance reports can be joined across passes.
struct GaussianScene {
  std::vector<Gaussian> gaussians;
  std::vector<int> ids;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  void push_back(const Gaussian& g) {
    ids.push_back(ids.empty() ? 0 : ids.back() + 1);
    gaussians.push_back(g);
  }
  void check_consistent() const;  // ids unique, sizes match
};

class PlyError : public DataError {
 public:
  enum class Kind { kMalformedHeader, kMissingProperty, kWrongElementCount, kIo };

  PlyError(Kind kind, std::size_t byte_offset, const std::string& msg)
      : DataError(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        kind_(kind),
        byte_offset_(byte_offset) {}

  Kind kind() const { return kind_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  Kind kind_;
  std::size_t byte_offset_;
};

// Binary little-endian PLY with the de-facto splat vertex layout:
// x,y,z, f_dc_0..2 (SH0 color), opacity (logit), scale_0..2 (log-scales),
// rot_0..3 (wxyz quaternion). The loader is property-name driven and skips
// unknown float properties (nx/ny/nz, f_rest_*), so ecosystem exports load.
GaussianScene load_ply(const std::filesystem::path& path);
void save_ply(const GaussianScene& scene, const std::filesystem::path& path);

}  // namespace splatfuse
