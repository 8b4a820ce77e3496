#pragma once

#include <cstdint>
#include <vector>

#include "splatfuse/geometry.hpp"
#include "splatfuse/image.hpp"
#include "splatfuse/render.hpp"
#include "splatfuse/scene.hpp"

namespace splatfuse {

// Desk-scale stand-in for an outdoor capture: a textured ground rectangle
// with boxes and spheres, viewed from a camera arc. Identical spec -> bit
// identical output.
struct SyntheticSceneSpec {
  uint64_t seed = 7;
  int gaussian_count = 500;
  int camera_count = 12;
  int width = 80, height = 60;
  double fov_deg = 55.0;
  double arc_degrees = 70.0;   // total angular span of the camera arc
  double ring_radius = 3.2;    // m, must be > 0
  double ring_height = 1.6;    // m above the ground plane
  double extent = 2.0;         // ground half-extent, m
  int box_count = 3;
  int sphere_count = 2;
  int floater_count = 0;
  double floater_offset = 0.5;    // minimum distance from every surface, m
  int floater_clump_size = 7;     // floaters appear in tight clumps
};

struct SurfaceBox {
  Eigen::Vector3d center;
  Eigen::Vector3d half;
};

struct SurfaceSphere {
  Eigen::Vector3d center;
  double radius = 0.0;
};

// The generator's solid model; distance() gives the unsigned distance to the
// nearest primitive boundary (0 on any surface).
struct SurfaceModel {
  double extent = 0.0;  // ground rectangle [-extent,extent]^2 at y=0
  std::vector<SurfaceBox> boxes;
  std::vector<SurfaceSphere> spheres;

  double distance(const Eigen::Vector3d& p) const;
};

struct SyntheticScene {
  GaussianScene scene;
  std::vector<Camera> cameras;
  std::vector<RenderOutput> renders;  // ground-truth renders, one per camera
  std::vector<int> floater_ids;
  SurfaceModel surfaces;
};

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec);

// Ground-truth renders of the scene with the floaters removed; reference
// images for pruning experiments.
std::vector<RenderOutput> render_without_floaters(const SyntheticScene& synth);

enum class CorruptMode { kGaussianBlur, kHoleMask, kColorShift, kGhostOverlay };

CorruptMode corrupt_mode_from_string(const std::string& name);  // throws ConfigError

struct CorruptParams {
  double amount = 0.1;    // blur sigma (px) / hole area ratio / color delta / ghost blend
  int patch_size = 12;    // hole & ghost patch edge, px
  int patch_count = 3;    // ghost patches
  int ghost_shift_x = 7;
  int ghost_shift_y = 3;
};

// Deterministic frame defect simulator. When stencil_out is non-null it
// receives a single-channel {0,1} map of the modified pixels.
Image corrupt_frame(const Image& image, CorruptMode mode, uint64_t seed,
                    const CorruptParams& params = {}, Image* stencil_out = nullptr);

}  // namespace splatfuse
