#include "splatfuse/geometry.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "splatfuse/common.hpp"

namespace splatfuse {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DataError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw DataError("intrinsics: principal point outside the image");
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.q = q.conjugate();
  inv.t = -(inv.q * t);
  return inv;
}

RigidPose RigidPose::compose(const RigidPose& other) const {
  RigidPose out;
  out.q = q * other.q;
  out.q.normalize();
  out.t = q * other.t + t;
  return out;
}

std::optional<PixelDepth> project(const Camera& camera, const Eigen::Vector3d& point_world,
                                  double z_near) {
  const Eigen::Vector3d pc = camera.pose.apply(point_world);
  if (pc.z() <= z_near) return std::nullopt;
  const Intrinsics& in = camera.intrinsics;
  PixelDepth out;
  out.pixel = {in.fx * pc.x() / pc.z() + in.cx, in.fy * pc.y() / pc.z() + in.cy};
  out.depth = pc.z();
  return out;
}

Eigen::Vector3d backproject(const Camera& camera, const Eigen::Vector2d& pixel, double depth) {
  if (!(depth > 0.0)) throw DataError("backproject: depth must be positive");
  const Intrinsics& in = camera.intrinsics;
  const Eigen::Vector3d pc{(pixel.x() - in.cx) / in.fx * depth,
                           (pixel.y() - in.cy) / in.fy * depth, depth};
  return camera.pose.inverse().apply(pc);
}

std::optional<PixelDepth> reproject_pixel(const Camera& cam_a, const Camera& cam_b,
                                          const Eigen::Vector2d& pixel_a, double depth_a,
                                          double z_near) {
  const Eigen::Vector3d world = backproject(cam_a, pixel_a, depth_a);
  return project(cam_b, world, z_near);
}

Eigen::Quaterniond so3_exp(const Eigen::Vector3d& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    q.normalize();
    return q;
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
}

Eigen::Vector3d so3_log(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond qn = q.normalized();
  if (qn.w() < 0.0) qn.coeffs() = -qn.coeffs();  // shortest rotation
  const Eigen::AngleAxisd aa(qn);
  return aa.angle() * aa.axis();
}

RigidPose PoseDelta::apply_to(const RigidPose& base) const {
  RigidPose delta;
  delta.q = so3_exp(rot);
  delta.t = trans;
  RigidPose out = delta.compose(base);
  out.renormalize();
  return out;
}

PoseDelta PoseDelta::between(const RigidPose& base, const RigidPose& updated) {
  const RigidPose d = updated.compose(base.inverse());
  PoseDelta out;
  out.rot = so3_log(d.q);
  out.trans = d.t;
  return out;
}

nlohmann::json camera_to_json(const Camera& cam) {
  return nlohmann::json{{"id", cam.id},
                        {"fx", cam.intrinsics.fx},
                        {"fy", cam.intrinsics.fy},
                        {"cx", cam.intrinsics.cx},
                        {"cy", cam.intrinsics.cy},
                        {"width", cam.intrinsics.width},
                        {"height", cam.intrinsics.height},
                        {"q", {cam.pose.q.w(), cam.pose.q.x(), cam.pose.q.y(), cam.pose.q.z()}},
                        {"t", {cam.pose.t.x(), cam.pose.t.y(), cam.pose.t.z()}}};
}

Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  try {
    cam.id = j.at("id").get<int>();
    cam.intrinsics.fx = j.at("fx").get<double>();
    cam.intrinsics.fy = j.at("fy").get<double>();
    cam.intrinsics.cx = j.at("cx").get<double>();
    cam.intrinsics.cy = j.at("cy").get<double>();
    cam.intrinsics.width = j.at("width").get<int>();
    cam.intrinsics.height = j.at("height").get<int>();
    const auto& q = j.at("q");
    const auto& t = j.at("t");
    if (q.size() != 4 || t.size() != 3) throw DataError("camera JSON: q must have 4 and t 3 entries");
    cam.pose.q = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                    q[3].get<double>());
    cam.pose.t = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("camera JSON: ") + e.what());
  }
  if (std::abs(cam.pose.q.norm() - 1.0) > 1e-6)
    throw DataError("camera JSON: quaternion is not unit length");
  cam.pose.renormalize();
  cam.intrinsics.validate();
  return cam;
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open camera file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("camera file " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw DataError("camera file must contain a JSON array");
  std::vector<Camera> cams;
  cams.reserve(j.size());
  for (const auto& item : j) cams.push_back(camera_from_json(item));
  return cams;
}

void save_cameras(const std::vector<Camera>& cams, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cams) j.push_back(camera_to_json(c));
  std::ofstream out(path);
  if (!out) throw DataError("cannot write camera file: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace splatfuse
