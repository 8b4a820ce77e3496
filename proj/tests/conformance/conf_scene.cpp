#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "splatfuse/metrics.hpp"
#include "splatfuse/scene.hpp"
#include "splatfuse/synth.hpp"

using namespace splatfuse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "splatfuse_conf_scene";
  fs::create_directories(dir);
  return dir;
}

double max_field_delta(const GaussianScene& a, const GaussianScene& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, (a.gaussians[i].center - b.gaussians[i].center).cwiseAbs().maxCoeff());
    m = std::max(m, (a.gaussians[i].log_scales - b.gaussians[i].log_scales).cwiseAbs().maxCoeff());
    m = std::max(m, (a.gaussians[i].color - b.gaussians[i].color).cwiseAbs().maxCoeff());
    m = std::max(m, std::abs(a.gaussians[i].opacity_logit - b.gaussians[i].opacity_logit));
    m = std::max(m, std::abs(a.gaussians[i].rotation.angularDistance(b.gaussians[i].rotation)));
  }
  return m;
}

}  // namespace

TEST_SUITE("conformance") {

TEST_CASE("scene: PLY round-trip of a 100-gaussian random scene") {
  const GaussianScene scene = oracles::random_scene(100, 21);
  const fs::path path = temp_dir() / "roundtrip.ply";
  save_ply(scene, path);
  const GaussianScene back = load_ply(path);
  CHECK(max_field_delta(scene, back) < 1e-6);
}

TEST_CASE("scene: empty PLY round-trip") {
  const fs::path path = temp_dir() / "empty.ply";
  save_ply(GaussianScene{}, path);
  const GaussianScene back = load_ply(path);
  CHECK(back.empty());
}

TEST_CASE("scene: truncated PLY body names expected vs actual counts") {
  const GaussianScene scene = oracles::random_scene(10, 3);
  const fs::path path = temp_dir() / "trunc.ply";
  save_ply(scene, path);
  // chop the last vertex and a half
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 14 * 4 - 20);
  try {
    load_ply(path);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyError::Kind::kWrongElementCount);
    CHECK(std::string(e.what()).find("expected 10") != std::string::npos);
    CHECK(e.byte_offset() > 0);
  }
}

TEST_CASE("scene: missing vertex property is a distinct error") {
  const fs::path path = temp_dir() / "noprop.ply";
  std::ofstream out(path, std::ios::binary);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex 0\n"
         "property float x\nproperty float y\nproperty float z\nend_header\n";
  out.close();
  try {
    load_ply(path);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyError::Kind::kMissingProperty);
  }
}

TEST_CASE("scene: malformed header is a distinct error with offset") {
  const fs::path path = temp_dir() / "badheader.ply";
  std::ofstream out(path, std::ios::binary);
  out << "ply\nformat ascii 1.0\nend_header\n";
  out.close();
  try {
    load_ply(path);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyError::Kind::kMalformedHeader);
  }
}

TEST_CASE("scene: synthetic generation is deterministic under the seed") {
  SyntheticSceneSpec spec;
  spec.seed = 7;
  spec.gaussian_count = 120;
  spec.camera_count = 4;
  spec.width = 40;
  spec.height = 30;
  const SyntheticScene a = generate_synthetic(spec);
  const SyntheticScene b = generate_synthetic(spec);
  REQUIRE(a.scene.size() == b.scene.size());
  CHECK(max_field_delta(a.scene, b.scene) == 0.0);
  REQUIRE(a.renders.size() == b.renders.size());
  for (std::size_t i = 0; i < a.renders.size(); ++i) {
    CHECK(a.renders[i].color == b.renders[i].color);
    CHECK(a.renders[i].depth == b.renders[i].depth);
  }
}

TEST_CASE("scene: with no floaters every gaussian lies on a surface") {
  SyntheticSceneSpec spec;
  spec.seed = 11;
  spec.gaussian_count = 300;
  spec.camera_count = 3;
  spec.width = 24;
  spec.height = 18;
  spec.floater_count = 0;
  const SyntheticScene s = generate_synthetic(spec);
  CHECK(s.floater_ids.empty());
  for (const Gaussian& g : s.scene.gaussians)
    CHECK(s.surfaces.distance(g.center) < 1e-6);
}

TEST_CASE("scene: floaters are labeled and keep their distance") {
  SyntheticSceneSpec spec;
  spec.seed = 13;
  spec.gaussian_count = 200;
  spec.camera_count = 3;
  spec.width = 24;
  spec.height = 18;
  spec.floater_count = 20;
  spec.floater_offset = 0.5;
  const SyntheticScene s = generate_synthetic(spec);
  CHECK(s.floater_ids.size() == 20);
  int found = 0;
  for (std::size_t i = 0; i < s.scene.size(); ++i) {
    const bool is_floater = std::find(s.floater_ids.begin(), s.floater_ids.end(),
                                      s.scene.ids[i]) != s.floater_ids.end();
    if (is_floater) {
      ++found;
      CHECK(s.surfaces.distance(s.scene.gaussians[i].center) >= 0.5 - 1e-9);
    }
  }
  CHECK(found == 20);
}

TEST_CASE("scene: corrupt_frame color-shift of 0.1 lands at 20 dB") {
  SeededRng rng(5);
  Image img(32, 24, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform(0.05, 0.85));
  CorruptParams params;
  params.amount = 0.1;
  const Image shifted = corrupt_frame(img, CorruptMode::kColorShift, 1, params);
  CHECK(std::abs(psnr(img, shifted) - 20.0) < 1e-6);
}

TEST_CASE("scene: corrupt_frame hole ratio 0 is the identity") {
  SeededRng rng(6);
  Image img(32, 24, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  CorruptParams params;
  params.amount = 0.0;
  Image stencil;
  const Image out = corrupt_frame(img, CorruptMode::kHoleMask, 9, params, &stencil);
  CHECK(out.data == img.data);
  for (float v : stencil.data) CHECK(v == 0.0f);
}

TEST_CASE("scene: corrupt_frame is deterministic per seed") {
  SeededRng rng(8);
  Image img(40, 30, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  CorruptParams params;
  params.amount = 0.25;
  const Image a = corrupt_frame(img, CorruptMode::kHoleMask, 33, params);
  const Image b = corrupt_frame(img, CorruptMode::kHoleMask, 33, params);
  CHECK(a.data == b.data);
  const Image c = corrupt_frame(img, CorruptMode::kGhostOverlay, 33, params);
  const Image d = corrupt_frame(img, CorruptMode::kGhostOverlay, 33, params);
  CHECK(c.data == d.data);
}

TEST_CASE("scene: corrupt_frame rejects unknown modes by name") {
  CHECK_THROWS_AS(corrupt_mode_from_string("vignette"), ConfigError);
  CHECK(corrupt_mode_from_string("hole-mask") == CorruptMode::kHoleMask);
}

}  // TEST_SUITE
