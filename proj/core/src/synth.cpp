#include "splatfuse/synth.hpp"

#include <algorithm>
#include <cmath>

#include "splatfuse/common.hpp"
#include "splatfuse/rng.hpp"

namespace splatfuse {

namespace {

double box_boundary_distance(const SurfaceBox& b, const Eigen::Vector3d& p) {
  const Eigen::Vector3d q = (p - b.center).cwiseAbs() - b.half;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return std::abs(outside + inside);
}

double ground_distance(double extent, const Eigen::Vector3d& p) {
  const double dx = std::max({-extent - p.x(), 0.0, p.x() - extent});
  const double dz = std::max({-extent - p.z(), 0.0, p.z() - extent});
  return std::sqrt(dx * dx + dz * dz + p.y() * p.y());
}

}  // namespace

double SurfaceModel::distance(const Eigen::Vector3d& p) const {
  double d = ground_distance(extent, p);
  for (const SurfaceBox& b : boxes) d = std::min(d, box_boundary_distance(b, p));
  for (const SurfaceSphere& s : spheres) d = std::min(d, std::abs((p - s.center).norm() - s.radius));
  return d;
}

namespace {

struct SurfaceSample {
  Eigen::Vector3d point;
  Eigen::Vector3d normal;
  Eigen::Vector3d base_color;
};

// Quaternion rotating +z onto the given unit normal.
Eigen::Quaterniond frame_from_normal(const Eigen::Vector3d& n) {
  return Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), n);
}

class SurfaceSampler {
 public:
  SurfaceSampler(const SurfaceModel& model, SeededRng& rng) : model_(model), rng_(rng) {
    // area-proportional primitive choice; boxes expose 5 faces (no bottom)
    weights_.push_back(4.0 * model.extent * model.extent);
    for (const SurfaceBox& b : model.boxes) {
      const Eigen::Vector3d s = 2.0 * b.half;
      weights_.push_back(s.x() * s.z() + 2.0 * s.x() * s.y() + 2.0 * s.y() * s.z());
    }
    for (const SurfaceSphere& s : model.spheres)
      weights_.push_back(4.0 * M_PI * s.radius * s.radius);
    total_ = 0.0;
    for (double w : weights_) total_ += w;
  }

  SurfaceSample sample() {
    double pick = rng_.uniform() * total_;
    std::size_t idx = 0;
    while (idx + 1 < weights_.size() && pick > weights_[idx]) {
      pick -= weights_[idx];
      ++idx;
    }
    if (idx == 0) return sample_ground();
    if (idx <= model_.boxes.size()) return sample_box(model_.boxes[idx - 1], idx - 1);
    return sample_sphere(model_.spheres[idx - 1 - model_.boxes.size()],
                         idx - 1 - model_.boxes.size());
  }

 private:
  SurfaceSample sample_ground() {
    SurfaceSample s;
    s.point = {rng_.uniform(-model_.extent, model_.extent), 0.0,
               rng_.uniform(-model_.extent, model_.extent)};
    s.normal = Eigen::Vector3d::UnitY();
    s.base_color = {0.38, 0.52, 0.33};
    return s;
  }

  SurfaceSample sample_box(const SurfaceBox& b, std::size_t idx) {
    static const Eigen::Vector3d palette[4] = {
        {0.70, 0.35, 0.28}, {0.30, 0.42, 0.68}, {0.72, 0.62, 0.30}, {0.52, 0.32, 0.60}};
    const Eigen::Vector3d s = 2.0 * b.half;
    const double faces[5] = {s.x() * s.z(),          // top
                             s.x() * s.y(), s.x() * s.y(),   // front/back (z faces)
                             s.y() * s.z(), s.y() * s.z()};  // left/right (x faces)
    double total = 0.0;
    for (double a : faces) total += a;
    double pick = rng_.uniform() * total;
    int face = 0;
    while (face < 4 && pick > faces[face]) {
      pick -= faces[face];
      ++face;
    }
    const double u = rng_.uniform(-1.0, 1.0), v = rng_.uniform(-1.0, 1.0);
    SurfaceSample out;
    switch (face) {
      case 0:
        out.point = b.center + Eigen::Vector3d(u * b.half.x(), b.half.y(), v * b.half.z());
        out.normal = Eigen::Vector3d::UnitY();
        break;
      case 1:
        out.point = b.center + Eigen::Vector3d(u * b.half.x(), v * b.half.y(), b.half.z());
        out.normal = Eigen::Vector3d::UnitZ();
        break;
      case 2:
        out.point = b.center + Eigen::Vector3d(u * b.half.x(), v * b.half.y(), -b.half.z());
        out.normal = -Eigen::Vector3d::UnitZ();
        break;
      case 3:
        out.point = b.center + Eigen::Vector3d(b.half.x(), u * b.half.y(), v * b.half.z());
        out.normal = Eigen::Vector3d::UnitX();
        break;
      default:
        out.point = b.center + Eigen::Vector3d(-b.half.x(), u * b.half.y(), v * b.half.z());
        out.normal = -Eigen::Vector3d::UnitX();
        break;
    }
    out.base_color = palette[idx % 4];
    return out;
  }

  SurfaceSample sample_sphere(const SurfaceSphere& s, std::size_t idx) {
    static const Eigen::Vector3d palette[3] = {
        {0.78, 0.56, 0.22}, {0.35, 0.62, 0.62}, {0.62, 0.62, 0.62}};
    // uniform direction via normalized gaussian triple
    Eigen::Vector3d dir(rng_.normal(), rng_.normal(), rng_.normal());
    while (dir.norm() < 1e-9) dir = {rng_.normal(), rng_.normal(), rng_.normal()};
    dir.normalize();
    SurfaceSample out;
    out.point = s.center + s.radius * dir;
    out.normal = dir;
    out.base_color = palette[idx % 3];
    return out;
  }

  const SurfaceModel& model_;
  SeededRng& rng_;
  std::vector<double> weights_;
  double total_ = 0.0;
};

Camera make_arc_camera(int id, double angle_rad, const SyntheticSceneSpec& spec,
                       const Eigen::Vector3d& target) {
  const Eigen::Vector3d eye(spec.ring_radius * std::sin(angle_rad), spec.ring_height,
                            spec.ring_radius * std::cos(angle_rad));
  const Eigen::Vector3d fwd = (target - eye).normalized();  // camera z
  Eigen::Vector3d down(0.0, -1.0, 0.0);
  down = (down - down.dot(fwd) * fwd).normalized();  // camera y
  const Eigen::Vector3d right = down.cross(fwd);     // camera x (right-handed)

  Eigen::Matrix3d R;
  R.row(0) = right;
  R.row(1) = down;
  R.row(2) = fwd;

  Camera cam;
  cam.id = id;
  cam.intrinsics.width = spec.width;
  cam.intrinsics.height = spec.height;
  const double f = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * M_PI / 180.0);
  cam.intrinsics.fx = cam.intrinsics.fy = f;
  cam.intrinsics.cx = 0.5 * (spec.width - 1);
  cam.intrinsics.cy = 0.5 * (spec.height - 1);
  cam.pose.q = Eigen::Quaterniond(R);
  cam.pose.q.normalize();
  cam.pose.t = -(R * eye);
  cam.intrinsics.validate();
  return cam;
}

}  // namespace

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec) {
  if (spec.gaussian_count < 1) throw ConfigError("synthetic scene needs at least 1 gaussian");
  if (spec.camera_count < 2) throw ConfigError("synthetic scene needs at least 2 cameras");
  if (!(spec.ring_radius > 0.0)) throw ConfigError("degenerate camera ring: radius must be > 0");
  if (spec.width < 8 || spec.height < 8) throw ConfigError("synthetic images must be >= 8x8");

  SeededRng rng(spec.seed);
  SyntheticScene out;

  out.surfaces.extent = spec.extent;
  for (int i = 0; i < spec.box_count; ++i) {
    SurfaceBox b;
    b.half = {rng.uniform(0.18, 0.4), rng.uniform(0.2, 0.55), rng.uniform(0.18, 0.4)};
    const double r = 0.55 * spec.extent;
    b.center = {rng.uniform(-r, r), b.half.y(), rng.uniform(-r, r)};
    out.surfaces.boxes.push_back(b);
  }
  for (int i = 0; i < spec.sphere_count; ++i) {
    SurfaceSphere s;
    s.radius = rng.uniform(0.15, 0.35);
    const double r = 0.7 * spec.extent;
    s.center = {rng.uniform(-r, r), s.radius, rng.uniform(-r, r)};
    out.surfaces.spheres.push_back(s);
  }

  const Eigen::Vector3d look_target(0.0, 0.35, 0.0);
  const double arc = spec.arc_degrees * M_PI / 180.0;
  for (int i = 0; i < spec.camera_count; ++i) {
    const double a = spec.camera_count == 1
                         ? 0.0
                         : -0.5 * arc + arc * static_cast<double>(i) / (spec.camera_count - 1);
    out.cameras.push_back(make_arc_camera(i, a, spec, look_target));
  }

  // tangential footprint sized so the surface gaussians overlap into a
  // closed, textured sheet
  double area = 4.0 * spec.extent * spec.extent;
  for (const SurfaceBox& b : out.surfaces.boxes) {
    const Eigen::Vector3d s = 2.0 * b.half;
    area += s.x() * s.z() + 2.0 * s.x() * s.y() + 2.0 * s.y() * s.z();
  }
  for (const SurfaceSphere& s : out.surfaces.spheres) area += 4.0 * M_PI * s.radius * s.radius;
  const double spacing = std::sqrt(area / spec.gaussian_count);

  SurfaceSampler sampler(out.surfaces, rng);
  const int surface_count = spec.gaussian_count;
  for (int i = 0; i < surface_count; ++i) {
    const SurfaceSample s = sampler.sample();
    Gaussian g;
    g.center = s.point;
    const double tangential = spacing * rng.uniform(0.75, 1.1);
    g.log_scales = {std::log(tangential), std::log(tangential * rng.uniform(0.8, 1.25)),
                    std::log(tangential * 0.25)};
    g.rotation = frame_from_normal(s.normal);
    g.opacity_logit = logit(rng.uniform(0.7, 0.92));
    for (int c = 0; c < 3; ++c)
      g.color[c] = std::clamp(s.base_color[c] + rng.uniform(-0.18, 0.18), 0.05, 0.95);
    out.scene.push_back(g);
  }

  if (spec.floater_count > 0) {
    Eigen::Vector3d cam_centroid = Eigen::Vector3d::Zero();
    for (const Camera& c : out.cameras) cam_centroid += c.pose.center();
    cam_centroid /= static_cast<double>(out.cameras.size());

    int remaining = spec.floater_count;
    while (remaining > 0) {
      const int clump = std::min(remaining, std::max(1, spec.floater_clump_size));
      const SurfaceSample anchor = sampler.sample();
      const Eigen::Vector3d dir = (cam_centroid - anchor.point).normalized();
      Eigen::Vector3d base = anchor.point + dir * (1.4 * spec.floater_offset);
      while (out.surfaces.distance(base) < spec.floater_offset)
        base += dir * (0.2 * spec.floater_offset);

      for (int j = 0; j < clump; ++j) {
        Eigen::Vector3d center;
        do {
          center = base + Eigen::Vector3d(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03),
                                          rng.uniform(-0.03, 0.03));
        } while (out.surfaces.distance(center) < spec.floater_offset);
        Gaussian g;
        g.center = center;
        const double t = spacing * rng.uniform(0.5, 0.8);
        g.log_scales = {std::log(t), std::log(t), std::log(t * 0.6)};
        g.rotation = frame_from_normal(dir);
        g.opacity_logit = logit(rng.uniform(0.75, 0.9));
        for (int c = 0; c < 3; ++c) g.color[c] = std::clamp(0.5 + rng.uniform(-0.2, 0.2), 0.05, 0.95);
        out.scene.push_back(g);
        out.floater_ids.push_back(out.scene.ids.back());
      }
      remaining -= clump;
    }
  }

  out.renders.reserve(out.cameras.size());
  for (const Camera& cam : out.cameras) out.renders.push_back(render(out.scene, cam));
  return out;
}

std::vector<RenderOutput> render_without_floaters(const SyntheticScene& synth) {
  GaussianScene surface_only;
  for (std::size_t i = 0; i < synth.scene.size(); ++i) {
    const int id = synth.scene.ids[i];
    if (std::find(synth.floater_ids.begin(), synth.floater_ids.end(), id) ==
        synth.floater_ids.end()) {
      surface_only.gaussians.push_back(synth.scene.gaussians[i]);
      surface_only.ids.push_back(id);
    }
  }
  std::vector<RenderOutput> renders;
  renders.reserve(synth.cameras.size());
  for (const Camera& cam : synth.cameras) renders.push_back(render(surface_only, cam));
  return renders;
}

CorruptMode corrupt_mode_from_string(const std::string& name) {
  if (name == "gaussian-blur") return CorruptMode::kGaussianBlur;
  if (name == "hole-mask") return CorruptMode::kHoleMask;
  if (name == "color-shift") return CorruptMode::kColorShift;
  if (name == "ghost-overlay") return CorruptMode::kGhostOverlay;
  throw ConfigError("unknown corruption mode: " + name);
}

namespace {

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= sum;

  Image tmp = img, out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int xi = std::clamp(x + i, 0, img.width - 1);
          acc += k[static_cast<std::size_t>(i + r)] * img.at(xi, y, c);
        }
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int yi = std::clamp(y + i, 0, img.height - 1);
          acc += k[static_cast<std::size_t>(i + r)] * tmp.at(x, yi, c);
        }
        out.at(x, y, c) = static_cast<float>(acc);
      }
  return out;
}

}  // namespace

Image corrupt_frame(const Image& image, CorruptMode mode, uint64_t seed,
                    const CorruptParams& params, Image* stencil_out) {
  SeededRng rng(seed);
  Image out = image;
  Image stencil(image.width, image.height, 1);

  switch (mode) {
    case CorruptMode::kGaussianBlur: {
      out = gaussian_blur(image, params.amount);
      std::fill(stencil.data.begin(), stencil.data.end(), 1.0f);
      break;
    }
    case CorruptMode::kColorShift: {
      for (float& v : out.data)
        v = static_cast<float>(std::clamp(v + params.amount, 0.0, 1.0));
      std::fill(stencil.data.begin(), stencil.data.end(), 1.0f);
      break;
    }
    case CorruptMode::kHoleMask: {
      const double total = static_cast<double>(image.width) * image.height;
      const double patch_area = static_cast<double>(params.patch_size) * params.patch_size;
      const int count = static_cast<int>(std::ceil(params.amount * total / patch_area));
      for (int p = 0; p < count; ++p) {
        const int x0 = static_cast<int>(rng.uniform_index(
            static_cast<uint64_t>(std::max(1, image.width - params.patch_size + 1))));
        const int y0 = static_cast<int>(rng.uniform_index(
            static_cast<uint64_t>(std::max(1, image.height - params.patch_size + 1))));
        for (int y = y0; y < std::min(image.height, y0 + params.patch_size); ++y)
          for (int x = x0; x < std::min(image.width, x0 + params.patch_size); ++x) {
            for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = 0.5f;
            stencil.at(x, y) = 1.0f;
          }
      }
      break;
    }
    case CorruptMode::kGhostOverlay: {
      const double w = std::clamp(params.amount, 0.0, 1.0);
      for (int p = 0; p < params.patch_count; ++p) {
        const int x0 = static_cast<int>(rng.uniform_index(
            static_cast<uint64_t>(std::max(1, image.width - params.patch_size + 1))));
        const int y0 = static_cast<int>(rng.uniform_index(
            static_cast<uint64_t>(std::max(1, image.height - params.patch_size + 1))));
        for (int y = y0; y < std::min(image.height, y0 + params.patch_size); ++y)
          for (int x = x0; x < std::min(image.width, x0 + params.patch_size); ++x) {
            const int xs = std::clamp(x + params.ghost_shift_x, 0, image.width - 1);
            const int ys = std::clamp(y + params.ghost_shift_y, 0, image.height - 1);
            for (int c = 0; c < image.channels; ++c)
              out.at(x, y, c) =
                  static_cast<float>((1.0 - w) * image.at(x, y, c) + w * (1.0 - image.at(xs, ys, c)));
            stencil.at(x, y) = 1.0f;
          }
      }
      break;
    }
  }
  if (stencil_out) *stencil_out = stencil;
  return out;
}

}  // namespace splatfuse
