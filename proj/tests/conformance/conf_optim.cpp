#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "splatfuse/metrics.hpp"
#include "splatfuse/optim.hpp"

using namespace splatfuse;

namespace {

Image noise_image(int w, int h, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  SeededRng rng(seed);
  Image img(w, h, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

// frames rendered from the given cameras; mask empty (fully trusted)
std::vector<TrainingFrame> frames_from(const GaussianScene& scene,
                                       const std::vector<Camera>& cams) {
  std::vector<TrainingFrame> frames;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const RenderOutput out = render(scene, cams[i]);
    TrainingFrame f;
    f.image = out.color_image();
    f.depth = out.depth_image();
    f.view = static_cast<int>(i);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Camera> ring_cameras(int count, double radius = 3.0) {
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    Camera cam = oracles::test_camera();
    cam.id = i;
    const double a = -0.3 + 0.6 * i / std::max(1, count - 1);
    const Eigen::Matrix3d R =
        Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix().transpose();
    const Eigen::Vector3d eye(radius * std::sin(a), 0.0, -radius * std::cos(a) + 3.0);
    cam.pose.q = Eigen::Quaterniond(R);
    cam.pose.t = -(R * eye);
    cams.push_back(cam);
  }
  return cams;
}

}  // namespace

TEST_SUITE("conformance") {

TEST_CASE("optim: exposure identity and affine arithmetic") {
  const Image img = noise_image(16, 12, 1);
  const Image same = apply_exposure(img, {1.0, 0.0});
  CHECK(same.data == img.data);

  Image px(1, 1, 3, 0.3f);
  const Image mapped = apply_exposure(px, {2.0, 0.1});
  for (int c = 0; c < 3; ++c) CHECK(mapped.at(0, 0, c) == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("optim: exposure inverse cancels within 1e-7 unclamped") {
  const Image img = noise_image(24, 18, 2, 0.1f, 0.9f);
  const ExposureParams fwd{1.7, 0.12};
  const ExposureParams inv{1.0 / 1.7, -0.12 / 1.7};
  const Image back = apply_exposure(apply_exposure(img, fwd, false), inv, false);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) < 1e-7);
}

TEST_CASE("optim: masked RGB-D loss vanishes on a perfect render") {
  const GaussianScene scene = oracles::random_scene(30, 44);
  const Camera cam = oracles::test_camera();
  const RenderOutput out = render(scene, cam);
  TrainingFrame frame;
  frame.image = out.color_image();
  frame.depth = out.depth_image();
  const LossBreakdown l =
      masked_rgbd_loss(out, {}, frame, {}, scene, std::numeric_limits<double>::infinity());
  CHECK(l.rgb < 1e-6);
  CHECK(l.depth < 1e-6);
  CHECK_FALSE(l.empty_mask);
}

TEST_CASE("optim: constant error of 0.1 gives L_rgb = 0.1, and a scaled mask cancels") {
  const GaussianScene scene = oracles::random_scene(25, 45, 0.6, 2.0, 3.0);
  const Camera cam = oracles::test_camera();
  const RenderOutput out = render(scene, cam);
  TrainingFrame frame;
  frame.image = out.color_image();
  for (float& v : frame.image.data) v += 0.1f;  // render stays well under 0.9
  const LossBreakdown l1 =
      masked_rgbd_loss(out, {}, frame, {}, scene, std::numeric_limits<double>::infinity());
  CHECK(l1.rgb == doctest::Approx(0.1).epsilon(1e-5));

  frame.mask = Image(frame.image.width, frame.image.height, 1, 0.5f);
  const LossBreakdown l2 =
      masked_rgbd_loss(out, {}, frame, {}, scene, std::numeric_limits<double>::infinity());
  CHECK(l2.rgb == doctest::Approx(l1.rgb).epsilon(1e-12));
}

TEST_CASE("optim: ssim of an image with itself is 1") {
  const Image img = noise_image(40, 30, 3);
  CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("optim: ssim of a checker against its negative is negative") {
  Image checker(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) checker.at(x, y, c) = ((x / 4 + y / 4) % 2) ? 1.0f : 0.0f;
  Image inverted = checker;
  for (float& v : inverted.data) v = 1.0f - v;
  CHECK(ssim(checker, inverted) < 0.0);
}

TEST_CASE("optim: ssim agrees with the direct-convolution reference on 10 random pairs") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Image a = noise_image(28, 22, 100 + seed);
    const Image b = noise_image(28, 22, 200 + seed);
    CHECK(std::abs(ssim(a, b) - oracles::reference_ssim(a, b)) < 1e-6);
  }
}

TEST_CASE("optim: ssim rejects images smaller than the window") {
  const Image tiny(8, 8, 3, 0.5f);
  CHECK_THROWS_AS(ssim(tiny, tiny), DataError);
}

TEST_CASE("optim: refine loss degenerate mixes") {
  const Image a = noise_image(36, 28, 7);
  Image b = a;
  for (std::size_t i = 0; i < b.data.size(); i += 3) b.data[i] += 0.05f;
  TrainingFrame frame;
  frame.image = a;

  CHECK(refine_loss(a, frame, 0.3) == doctest::Approx(0.0));

  // lambda = 0: exactly the mask-normalized channel-mean L1
  double l1 = 0.0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      double err = 0.0;
      for (int c = 0; c < 3; ++c)
        err += std::abs(static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
      l1 += err / 3.0;
    }
  l1 /= static_cast<double>(a.pixel_count());
  CHECK(refine_loss(b, frame, 0.0) == doctest::Approx(l1).epsilon(1e-12));

  // lambda = 1: exactly 1 - ssim
  CHECK(refine_loss(b, frame, 1.0) == doctest::Approx(1.0 - ssim(a, b)).epsilon(1e-12));
}

TEST_CASE("optim: stabilize recovers a perturbed pose on a 200-gaussian scene") {
  const GaussianScene scene = oracles::random_scene(200, 321, 1.0, 2.0, 4.5);
  std::vector<Camera> cams = ring_cameras(3);
  const std::vector<TrainingFrame> frames = frames_from(scene, cams);
  const std::vector<Camera> gt = cams;

  // perturb every camera by 0.05 m / 1 degree
  SeededRng rng(88);
  for (Camera& cam : cams) {
    PoseDelta d;
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    d.rot = axis * (1.0 * M_PI / 180.0);
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    d.trans = dir * 0.05;
    cam.pose = d.apply_to(cam.pose);
  }

  StabilizeOptions opts;
  opts.iterations = 400;
  const StabilizeResult res = stabilize_poses(scene, frames, cams, opts);
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const PoseDelta err = PoseDelta::between(gt[v].pose, res.cameras[v].pose);
    CHECK(err.trans.norm() < 0.005);
    CHECK(err.rot.norm() < 0.1 * M_PI / 180.0);
  }
  for (const auto& h : res.histories)
    for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1]);
}

TEST_CASE("optim: stabilize from the optimum stays at the optimum") {
  const GaussianScene scene = oracles::random_scene(60, 31, 0.8, 2.0, 3.5);
  std::vector<Camera> cams = ring_cameras(2);
  const std::vector<TrainingFrame> frames = frames_from(scene, cams);
  StabilizeOptions opts;
  opts.iterations = 40;
  const StabilizeResult res = stabilize_poses(scene, frames, cams, opts);
  for (const PoseDelta& d : res.deltas) {
    CHECK(d.trans.norm() < 1e-6);
    CHECK(d.rot.norm() < 1e-6);
  }
}

TEST_CASE("optim: stabilize recovers a global gain of 1.3") {
  const GaussianScene scene = oracles::random_scene(120, 77, 0.9, 2.0, 4.0);
  std::vector<Camera> cams = ring_cameras(2);
  std::vector<TrainingFrame> frames = frames_from(scene, cams);
  for (TrainingFrame& f : frames)
    for (float& v : f.image.data) v = std::min(1.0f, 1.3f * v);
  // targets are gain-scaled renders; recovered exposure gain tracks 1.3
  StabilizeOptions opts;
  opts.iterations = 150;
  const StabilizeResult res = stabilize_poses(scene, frames, cams, opts);
  for (std::size_t v = 0; v < cams.size(); ++v)
    CHECK(std::abs(res.exposures[v].a - 1.3) < 0.02);
}

TEST_CASE("optim: joint optimization repairs corrupted colors") {
  GaussianScene scene = oracles::random_scene(100, 55, 0.9, 2.0, 4.0);
  std::vector<Camera> cams = ring_cameras(3);
  const std::vector<TrainingFrame> frames = frames_from(scene, cams);

  SeededRng rng(66);
  for (std::size_t i = 0; i < scene.size(); ++i)
    if (rng.uniform() < 0.1)
      scene.gaussians[i].color = {rng.uniform(), rng.uniform(), rng.uniform()};

  std::vector<ExposureParams> exposures(cams.size());
  JointOptions opts;
  opts.iterations = 120;
  opts.optimize_poses = false;
  const JointResult res = joint_optimize(scene, cams, exposures, frames, opts);
  REQUIRE(res.history.size() == 120);
  CHECK(res.history.back().rgb < 0.1 * res.history.front().rgb);
  for (std::size_t i = 1; i < res.history.size(); ++i)
    CHECK(res.history[i].total <= res.history[i - 1].total);
}

TEST_CASE("optim: zero-iteration schedules are the identity") {
  GaussianScene scene = oracles::random_scene(20, 5);
  const GaussianScene before = scene;
  std::vector<Camera> cams = ring_cameras(2);
  std::vector<ExposureParams> exposures(cams.size());
  const std::vector<TrainingFrame> frames = frames_from(scene, cams);

  JointOptions jopts;
  jopts.iterations = 0;
  const JointResult jres = joint_optimize(scene, cams, exposures, frames, jopts);
  CHECK(jres.history.empty());
  RefineOptions ropts;
  ropts.iterations = 0;
  const JointResult rres = refine(scene, cams, exposures, frames, ropts);
  CHECK(rres.history.empty());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK(scene.gaussians[i].center == before.gaussians[i].center);
    CHECK(scene.gaussians[i].color == before.gaussians[i].color);
  }
}

TEST_CASE("optim: refine leaves a perfect scene in place") {
  GaussianScene scene = oracles::random_scene(60, 91, 0.8, 2.0, 3.5);
  const GaussianScene before = scene;
  std::vector<Camera> cams = ring_cameras(2);
  std::vector<ExposureParams> exposures(cams.size());
  const std::vector<TrainingFrame> frames = frames_from(scene, cams);
  RefineOptions opts;
  opts.iterations = 20;
  refine(scene, cams, exposures, frames, opts);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK((scene.gaussians[i].center - before.gaussians[i].center).norm() < 1e-6);
    CHECK((scene.gaussians[i].color - before.gaussians[i].color).norm() < 1e-6);
    CHECK((scene.gaussians[i].log_scales - before.gaussians[i].log_scales).norm() < 1e-6);
  }
}

TEST_CASE("optim: refine strictly improves SSIM of a color-blurred scene") {
  const GaussianScene sharp = oracles::random_scene(100, 14, 0.9, 2.0, 4.0);
  std::vector<Camera> cams = ring_cameras(2);
  std::vector<ExposureParams> exposures(cams.size());
  const std::vector<TrainingFrame> frames = frames_from(sharp, cams);

  // blur colors toward the scene mean
  GaussianScene blurred = sharp;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const Gaussian& g : blurred.gaussians) mean += g.color;
  mean /= static_cast<double>(blurred.size());
  for (Gaussian& g : blurred.gaussians) g.color = 0.4 * g.color + 0.6 * mean;

  auto mean_ssim = [&](const GaussianScene& s) {
    double total = 0.0;
    for (std::size_t v = 0; v < cams.size(); ++v)
      total += ssim(render(s, cams[v]).color_image(), frames[v].image);
    return total / static_cast<double>(cams.size());
  };
  const double before = mean_ssim(blurred);
  RefineOptions opts;
  opts.iterations = 120;
  refine(blurred, cams, exposures, frames, opts);
  const double after = mean_ssim(blurred);
  CHECK(after > before);
}

TEST_CASE("optim: refine with lambda 0 is a pure L1 run and deterministic") {
  const GaussianScene sharp = oracles::random_scene(40, 29, 0.8, 2.0, 3.2);
  std::vector<Camera> cams = ring_cameras(2);
  std::vector<ExposureParams> exposures(cams.size());
  const std::vector<TrainingFrame> frames = frames_from(sharp, cams);

  GaussianScene a = sharp;
  for (Gaussian& g : a.gaussians) g.color *= 0.8;
  GaussianScene b = a;

  RefineOptions opts;
  opts.iterations = 25;
  opts.lambda_ssim = 0.0;
  const JointResult ra = refine(a, cams, exposures, frames, opts);
  const JointResult rb = refine(b, cams, exposures, frames, opts);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.gaussians[i].color == b.gaussians[i].color);
    CHECK(a.gaussians[i].center == b.gaussians[i].center);
  }
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].total == rb.history[i].total);
    // with lambda = 0 the total IS the masked L1 term
    CHECK(ra.history[i].total == doctest::Approx(ra.history[i].rgb).epsilon(1e-12));
  }
}

}  // TEST_SUITE
