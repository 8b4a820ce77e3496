#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <filesystem>
#include <optional>
#include <vector>

#include "vendor_json_fwd.hpp"

namespace splatfuse {

// Pinhole intrinsics, pixel units. Pixel centers sit at integer coordinates:
// a world point projecting to (cx, cy) lands on the principal pixel.
struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const;  // throws DataError on violated invariants
};

// Rigid world-to-camera map: x_cam = R * x_world + t.
struct RigidPose {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();  // (w,x,y,z)
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RigidPose identity() { return {}; }

  Eigen::Matrix3d rotation() const { return q.toRotationMatrix(); }
  Eigen::Vector3d apply(const Eigen::Vector3d& x_world) const { return q * x_world + t; }
  // Camera position in world coordinates.
  Eigen::Vector3d center() const { return -(q.conjugate() * t); }

  RigidPose inverse() const;
  // Composition as maps: (*this ∘ other)(x) = this(other(x)).
  RigidPose compose(const RigidPose& other) const;
  void renormalize() { q.normalize(); }
};

struct Camera {
  int id = -1;
  Intrinsics intrinsics;
  RigidPose pose;
};

struct PixelDepth {
  Eigen::Vector2d pixel;
  double depth = 0.0;
};

inline constexpr double kDefaultZNear = 1e-4;

// Pinhole projection. Absent when the camera-frame depth is <= z_near.
std::optional<PixelDepth> project(const Camera& camera, const Eigen::Vector3d& point_world,
                                  double z_near = kDefaultZNear);

// Inverse of project; throws DataError for depth <= 0.
Eigen::Vector3d backproject(const Camera& camera, const Eigen::Vector2d& pixel, double depth);

// Transports (pixel, depth) seen by cam_a into cam_b. Absent when the point
// lands behind cam_b.
std::optional<PixelDepth> reproject_pixel(const Camera& cam_a, const Camera& cam_b,
                                          const Eigen::Vector2d& pixel_a, double depth_a,
                                          double z_near = kDefaultZNear);

// so(3) exponential / logarithm.
Eigen::Quaterniond so3_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d so3_log(const Eigen::Quaterniond& q);

// Left-multiplicative pose update: rotation delta in the rotation Lie
// algebra plus a translation delta. apply_to(T) = (Exp(rot), trans) ∘ T.
struct PoseDelta {
  Eigen::Vector3d rot = Eigen::Vector3d::Zero();
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();

  RigidPose apply_to(const RigidPose& base) const;
  // Delta d with d.apply_to(base) == updated.
  static PoseDelta between(const RigidPose& base, const RigidPose& updated);
};

// Camera JSON: {"id","fx","fy","cx","cy","width","height","q":[w,x,y,z],"t":[x,y,z]},
// pose world-to-camera. Trajectory files are arrays of these objects.
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);
std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::vector<Camera>& cams, const std::filesystem::path& path);

}  // namespace splatfuse
