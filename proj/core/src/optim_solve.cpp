#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "optim_detail.hpp"
#include "splatfuse/common.hpp"
#include "splatfuse/optim.hpp"

namespace splatfuse {

namespace {

double mask_val(const Image& mask, int x, int y) {
  return mask.empty() ? 1.0 : static_cast<double>(mask.at(x, y));
}

struct FrameGrads {
  double rgb = 0.0;
  double depth = 0.0;
  SceneGrads scene;
  Eigen::Vector3d pose_rot = Eigen::Vector3d::Zero();
  Eigen::Vector3d pose_trans = Eigen::Vector3d::Zero();
  double g_log_a = 0.0, g_b = 0.0;
};

// Photometric part of the weighted RGB-D loss for one frame; gradients of
// beta*L_rgb + (1-beta)*L_d when grads is non-null. Double precision
// throughout so line-search comparisons match the gradient evaluation.
void rgbd_frame_eval(const GaussianScene& scene, const Camera& cam, const ExposureParams& expo,
                     const TrainingFrame& frame, double beta, const RenderOptions& ropts,
                     double* rgb_out, double* depth_out, FrameGrads* grads) {
  const RenderOutput out = render(scene, cam, ropts);
  const Image& target = frame.image;
  if (target.width != out.width || target.height != out.height)
    throw DataError("optimizer: frame image does not match the camera resolution");

  const bool have_depth = !frame.depth.empty();
  double rgb_num = 0.0, rgb_den = 0.0, d_num = 0.0, d_den = 0.0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double m = mask_val(frame.mask, x, y);
      double err = 0.0;
      for (int c = 0; c < 3; ++c)
        err += std::abs(target.at(x, y, c) - (expo.a * out.color_at(x, y, c) + expo.b));
      rgb_num += m * (err / 3.0);
      rgb_den += m;
      if (have_depth && out.alpha_at(x, y) >= ropts.alpha_floor) {
        d_num += m * std::abs(frame.depth.at(x, y) - out.depth_at(x, y));
        d_den += m;
      }
    }
  *rgb_out = rgb_den > 0.0 ? rgb_num / rgb_den : 0.0;
  *depth_out = d_den > 0.0 ? d_num / d_den : 0.0;
  if (!grads) return;

  const std::size_t pixels = static_cast<std::size_t>(out.width) * out.height;
  std::vector<double> color_grad(pixels * 3, 0.0);
  std::vector<double> depth_grad;
  if (have_depth && d_den > 0.0) depth_grad.assign(pixels, 0.0);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double m = mask_val(frame.mask, x, y);
      if (m == 0.0) continue;
      const std::size_t pix = static_cast<std::size_t>(y) * out.width + x;
      if (rgb_den > 0.0) {
        for (int c = 0; c < 3; ++c) {
          const double e = target.at(x, y, c) - (expo.a * out.color_at(x, y, c) + expo.b);
          double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
          if (std::getenv("SPLATFUSE_SMOOTH")) sign = e / std::sqrt(e * e + 1e-6);
          color_grad[pix * 3 + c] = beta * (-m * sign) / (3.0 * rgb_den);
        }
      }
      if (!depth_grad.empty() && out.alpha_at(x, y) >= ropts.alpha_floor) {
        const double e = frame.depth.at(x, y) - out.depth_at(x, y);
        double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
        if (std::getenv("SPLATFUSE_SMOOTH")) sign = e / std::sqrt(e * e + 1e-4);
        depth_grad[pix] = (1.0 - beta) * (-m * sign) / d_den;
      }
    }

  const RenderGrads rg =
      render_with_gradients(scene, cam, color_grad, depth_grad, expo.a, expo.b, ropts);
  grads->rgb = *rgb_out;
  grads->depth = *depth_out;
  grads->scene = rg.scene;
  grads->pose_rot = rg.pose_rot;
  grads->pose_trans = rg.pose_trans;
  grads->g_log_a = rg.exposure_gain * expo.a;
  grads->g_b = rg.exposure_bias;
}

// Refinement loss (L1 + SSIM on mask-weighted images) for one frame.
double refine_frame_eval(const GaussianScene& scene, const Camera& cam,
                         const ExposureParams& expo, const TrainingFrame& frame,
                         double lambda_ssim, const RenderOptions& ropts, double* l1_out,
                         FrameGrads* grads) {
  const RenderOutput out = render(scene, cam, ropts);
  const Image& target = frame.image;
  if (target.width != out.width || target.height != out.height)
    throw DataError("optimizer: frame image does not match the camera resolution");

  const std::size_t pixels = static_cast<std::size_t>(out.width) * out.height;
  std::vector<double> exposed(pixels * 3);
  for (std::size_t i = 0; i < pixels * 3; ++i) exposed[i] = expo.a * out.color[i] + expo.b;

  double l1_num = 0.0, l1_den = 0.0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double m = mask_val(frame.mask, x, y);
      const std::size_t pix = static_cast<std::size_t>(y) * out.width + x;
      double err = 0.0;
      for (int c = 0; c < 3; ++c) err += std::abs(target.at(x, y, c) - exposed[pix * 3 + c]);
      l1_num += m * (err / 3.0);
      l1_den += m;
    }
  const double l1 = l1_den > 0.0 ? l1_num / l1_den : 0.0;
  if (l1_out) *l1_out = l1;

  double s = 1.0;
  std::vector<double> ssim_grad;
  if (lambda_ssim != 0.0) {
    std::vector<double> ta(pixels * 3), tb(pixels * 3);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const double m = mask_val(frame.mask, x, y);
        const std::size_t pix = static_cast<std::size_t>(y) * out.width + x;
        for (int c = 0; c < 3; ++c) {
          ta[pix * 3 + c] = m * target.at(x, y, c);
          tb[pix * 3 + c] = m * exposed[pix * 3 + c];
        }
      }
    s = detail::ssim_multichannel(ta, tb, out.width, out.height, 3,
                                  grads ? &ssim_grad : nullptr);
  }
  const double loss = (1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s);
  if (!grads) return loss;

  std::vector<double> color_grad(pixels * 3, 0.0);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double m = mask_val(frame.mask, x, y);
      const std::size_t pix = static_cast<std::size_t>(y) * out.width + x;
      for (int c = 0; c < 3; ++c) {
        double g = 0.0;
        if (m > 0.0 && l1_den > 0.0) {
          const double e = target.at(x, y, c) - exposed[pix * 3 + c];
          const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
          g += (1.0 - lambda_ssim) * (-m * sign) / (3.0 * l1_den);
        }
        if (lambda_ssim != 0.0) g += lambda_ssim * (-m * ssim_grad[pix * 3 + c]);
        color_grad[pix * 3 + c] = g;
      }
    }

  const RenderGrads rg = render_with_gradients(scene, cam, color_grad, {}, expo.a, expo.b, ropts);
  grads->rgb = l1;
  grads->scene = rg.scene;
  return loss;
}

// Descent machinery. Directions are the lr^2-preconditioned gradients
// normalized by an accumulated infinity norm, so step components stay
// proportional to their gradients and the dominant coordinate's first move
// is bounded by its learning rate. Because the losses are L1-shaped, a
// combined direction can be non-descending even when parts of it descend
// (pixels sitting exactly at a kink contribute no subgradient but a full
// first-order cost to any move). The line search therefore tries the full
// direction first and falls back to parameter groups, preferring whichever
// group succeeded last.
struct StepController {
  double acc = 0.0;
  double s_init = 1.0;
  int last_group = 0;

  // exponential moving average of the squared infinity norm; the line search
  // owns monotonicity, so the normalizer only tracks the current gradient
  // scale instead of annealing to zero
  double absorb(double inf_norm_sq) {
    acc = acc == 0.0 ? inf_norm_sq : 0.9 * acc + 0.1 * inf_norm_sq;
    return 1.0 / (std::sqrt(acc) + 1e-12);
  }
  void report(int group, bool first_try_accept, double accepted_s) {
    last_group = group;
    if (first_try_accept)
      s_init = std::min(64.0, 2.0 * accepted_s);
    else
      s_init = std::max(1.0, accepted_s);
  }
};

// Group ids shared by the stages; kAll must stay 0.
enum StepGroup : int {
  kGroupAll = 0,
  kGroupGaussians = 1,
  kGroupPoses = 2,
  kGroupExposureGain = 3,
  kGroupExposureBias = 4,
};

std::vector<int> group_order(int last_group, const std::vector<int>& groups) {
  std::vector<int> order;
  order.push_back(last_group);
  for (int g : groups)
    if (g != last_group) order.push_back(g);
  return order;
}

double inf_sq_scene(const SceneGrads& g, const GaussianLearningRates& lr) {
  double m = 0.0;
  for (std::size_t i = 0; i < g.centers.size(); ++i) {
    m = std::max(m, (lr.center * g.centers[i]).cwiseAbs().maxCoeff());
    m = std::max(m, (lr.log_scale * g.log_scales[i]).cwiseAbs().maxCoeff());
    m = std::max(m, (lr.rotation * g.rotations[i]).cwiseAbs().maxCoeff());
    m = std::max(m, std::abs(lr.opacity * g.opacity_logits[i]));
    m = std::max(m, (lr.color * g.colors[i]).cwiseAbs().maxCoeff());
  }
  return m * m;
}

// theta_i -= scale * lr_i^2 * g_i over the gaussian block; quaternions are
// renormalized after the update.
void apply_gauss_step(GaussianScene& scene, const SceneGrads& g, const GaussianLearningRates& lr,
                      double scale) {
  for (std::size_t i = 0; i < scene.size(); ++i) {
    Gaussian& gs = scene.gaussians[i];
    gs.center -= scale * lr.center * lr.center * g.centers[i];
    gs.log_scales -= scale * lr.log_scale * lr.log_scale * g.log_scales[i];
    gs.color -= scale * lr.color * lr.color * g.colors[i];
    gs.opacity_logit -= scale * lr.opacity * lr.opacity * g.opacity_logits[i];
    Eigen::Vector4d q(gs.rotation.w(), gs.rotation.x(), gs.rotation.y(), gs.rotation.z());
    q -= scale * lr.rotation * lr.rotation * g.rotations[i];
    if (q.norm() > 1e-12) {
      q.normalize();
      gs.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    }
  }
}

struct ViewParams {
  Camera cam;
  ExposureParams expo;
};

void apply_view_step(ViewParams& vp, const Eigen::Vector3d& g_rot, const Eigen::Vector3d& g_trans,
                     double lr_rot, double lr_trans, bool move_pose, double g_log_a, double g_b,
                     double lr_expo, bool move_gain, bool move_bias, double scale) {
  if (move_pose) {
    PoseDelta d;
    d.rot = -scale * lr_rot * lr_rot * g_rot;
    d.trans = -scale * lr_trans * lr_trans * g_trans;
    vp.cam.pose = d.apply_to(vp.cam.pose);
  }
  if (move_gain) {
    const double log_a = std::log(vp.expo.a) - scale * lr_expo * lr_expo * g_log_a;
    vp.expo.a = std::exp(log_a);
  }
  if (move_bias) vp.expo.b -= scale * lr_expo * lr_expo * g_b;
}

}  // namespace

StabilizeResult stabilize_poses(const GaussianScene& scene, const std::vector<TrainingFrame>& frames,
                                const std::vector<Camera>& cameras, const StabilizeOptions& opts) {
  StabilizeResult res;
  res.cameras = cameras;
  res.deltas.assign(cameras.size(), PoseDelta{});
  res.exposures.assign(cameras.size(), ExposureParams{});

  std::map<int, std::vector<const TrainingFrame*>> by_view;
  for (const TrainingFrame& f : frames) {
    if (f.view < 0 || f.view >= static_cast<int>(cameras.size()))
      throw DataError("stabilize_poses: frame references camera " + std::to_string(f.view));
    by_view[f.view].push_back(&f);
  }

  std::vector<int> groups{kGroupAll, kGroupPoses};

  const RenderOptions ropts;
  for (const auto& [view, view_frames] : by_view) {
    ViewParams vp{cameras[static_cast<std::size_t>(view)], ExposureParams{}};
    StepController ctl;
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(opts.iterations));

    std::vector<int> view_groups = groups;
    if (opts.optimize_exposure) {
      view_groups.push_back(kGroupExposureGain);
      view_groups.push_back(kGroupExposureBias);
    }

    auto view_loss = [&](const ViewParams& p) {
      double total = 0.0;
      for (const TrainingFrame* f : view_frames) {
        double rgb = 0.0, dep = 0.0;
        rgbd_frame_eval(scene, p.cam, p.expo, *f, opts.weights.beta, ropts, &rgb, &dep, nullptr);
        total += opts.weights.beta * rgb + (1.0 - opts.weights.beta) * dep;
      }
      return total / static_cast<double>(view_frames.size());
    };

    double current = view_loss(vp);
    int stall = 0;
    for (int iter = 0; iter < opts.iterations; ++iter) {
      if (!std::isfinite(current))
        throw DivergenceError("stabilize_poses: non-finite loss on view " + std::to_string(view));
      if (stall >= opts.descent.stall_abort) {  // line search can no longer descend
        history.push_back(current);
        continue;
      }

      Eigen::Vector3d g_rot = Eigen::Vector3d::Zero(), g_trans = Eigen::Vector3d::Zero();
      double g_la = 0.0, g_b = 0.0;
      for (const TrainingFrame* f : view_frames) {
        FrameGrads fg;
        double rgb = 0.0, dep = 0.0;
        rgbd_frame_eval(scene, vp.cam, vp.expo, *f, opts.weights.beta, ropts, &rgb, &dep, &fg);
        g_rot += fg.pose_rot;
        g_trans += fg.pose_trans;
        g_la += fg.g_log_a;
        g_b += fg.g_b;
      }
      const double inv_n = 1.0 / static_cast<double>(view_frames.size());
      g_rot *= inv_n;
      g_trans *= inv_n;
      g_la *= inv_n;
      g_b *= inv_n;

      double inf = std::max((opts.lr_rot * g_rot).cwiseAbs().maxCoeff(),
                            (opts.lr_trans * g_trans).cwiseAbs().maxCoeff());
      if (opts.optimize_exposure)
        inf = std::max({inf, std::abs(opts.lr_exposure * g_la), std::abs(opts.lr_exposure * g_b)});
      const double norm = ctl.absorb(inf * inf);

      bool accepted = false;
      for (int group : group_order(ctl.last_group, view_groups)) {
        const bool pose = group == kGroupAll || group == kGroupPoses;
        const bool gain = opts.optimize_exposure &&
                          (group == kGroupAll || group == kGroupExposureGain);
        const bool bias = opts.optimize_exposure &&
                          (group == kGroupAll || group == kGroupExposureBias);
        double s = ctl.s_init;
        for (int bt = 0; bt <= opts.descent.max_backtracks; ++bt) {
          ViewParams cand = vp;
          apply_view_step(cand, g_rot, g_trans, opts.lr_rot, opts.lr_trans, pose, g_la, g_b,
                          opts.lr_exposure, gain, bias, s * norm);
          const double cl = view_loss(cand);
          if (cl <= current) {
            vp = cand;
            current = cl;
            accepted = true;
            ctl.report(group, bt == 0, s);
            break;
          }
          s *= 0.5;
        }
        if (accepted) break;
      }
      history.push_back(current);
      stall = accepted ? 0 : stall + 1;
    }

    res.deltas[static_cast<std::size_t>(view)] =
        PoseDelta::between(cameras[static_cast<std::size_t>(view)].pose, vp.cam.pose);
    res.exposures[static_cast<std::size_t>(view)] = vp.expo;
    res.cameras[static_cast<std::size_t>(view)] = vp.cam;
    res.histories.push_back(std::move(history));
  }
  return res;
}

JointResult joint_optimize(GaussianScene& scene, std::vector<Camera>& cameras,
                           std::vector<ExposureParams>& exposures,
                           const std::vector<TrainingFrame>& frames, const JointOptions& opts) {
  if (exposures.size() != cameras.size())
    throw DataError("joint_optimize: exposures must match cameras");
  for (const TrainingFrame& f : frames)
    if (f.view < 0 || f.view >= static_cast<int>(cameras.size()))
      throw DataError("joint_optimize: frame references camera " + std::to_string(f.view));

  JointResult res;
  if (opts.iterations <= 0 || frames.empty()) return res;

  const RenderOptions ropts;
  const double inv_n = 1.0 / static_cast<double>(frames.size());
  double scale_cap = compute_scale_cap(scene);

  StepController ctl;
  std::vector<int> groups{kGroupAll, kGroupGaussians};
  if (opts.optimize_poses) groups.push_back(kGroupPoses);
  if (opts.optimize_exposure) {
    groups.push_back(kGroupExposureGain);
    groups.push_back(kGroupExposureBias);
  }

  struct LossParts {
    double total, rgb, depth, scale;
  };
  auto eval_loss = [&](const GaussianScene& sc, const std::vector<Camera>& cams,
                       const std::vector<ExposureParams>& exps) {
    double rgb_sum = 0.0, d_sum = 0.0;
    for (const TrainingFrame& f : frames) {
      double rgb = 0.0, dep = 0.0;
      rgbd_frame_eval(sc, cams[static_cast<std::size_t>(f.view)],
                      exps[static_cast<std::size_t>(f.view)], f, opts.weights.beta, ropts, &rgb,
                      &dep, nullptr);
      rgb_sum += rgb;
      d_sum += dep;
    }
    LossParts p;
    p.rgb = rgb_sum * inv_n;
    p.depth = d_sum * inv_n;
    p.scale = scale_loss(sc, scale_cap);
    p.total = opts.weights.beta * p.rgb + (1.0 - opts.weights.beta) * p.depth +
              opts.weights.lambda_scale * p.scale;
    return p;
  };

  LossParts current = eval_loss(scene, cameras, exposures);
  int stall = 0;
  for (int iter = 0; iter < opts.iterations; ++iter) {
    if (!std::isfinite(current.total)) throw DivergenceError("joint_optimize: non-finite loss");
    if (stall >= opts.descent.stall_abort && opts.spgm_every <= 0) {
      res.history.push_back({iter, current.total, current.rgb, current.depth, current.scale});
      continue;
    }
    if (opts.spgm_every > 0 && iter > 0 && iter % opts.spgm_every == 0 && scene.size() > 1) {
      ManageParams mp = opts.spgm;
      const ImportanceReport rep = importance_scores(scene, cameras, mp);
      const DropResult dropped = apply_drop(scene, rep, mp, opts.seed + static_cast<uint64_t>(iter));
      res.gaussians_dropped += static_cast<int>(scene.size() - dropped.scene.size());
      ++res.spgm_passes;
      scene = dropped.scene;
      current = eval_loss(scene, cameras, exposures);
      stall = 0;  // the landscape changed; descent may resume
    }

    SceneGrads grads;
    grads.resize(scene.size());
    std::vector<Eigen::Vector3d> g_rot(cameras.size(), Eigen::Vector3d::Zero());
    std::vector<Eigen::Vector3d> g_trans(cameras.size(), Eigen::Vector3d::Zero());
    std::vector<double> g_la(cameras.size(), 0.0), g_b(cameras.size(), 0.0);
    for (const TrainingFrame& f : frames) {
      FrameGrads fg;
      double rgb = 0.0, dep = 0.0;
      rgbd_frame_eval(scene, cameras[static_cast<std::size_t>(f.view)],
                      exposures[static_cast<std::size_t>(f.view)], f, opts.weights.beta, ropts,
                      &rgb, &dep, &fg);
      for (std::size_t i = 0; i < scene.size(); ++i) {
        grads.centers[i] += inv_n * fg.scene.centers[i];
        grads.log_scales[i] += inv_n * fg.scene.log_scales[i];
        grads.rotations[i] += inv_n * fg.scene.rotations[i];
        grads.opacity_logits[i] += inv_n * fg.scene.opacity_logits[i];
        grads.colors[i] += inv_n * fg.scene.colors[i];
      }
      const std::size_t v = static_cast<std::size_t>(f.view);
      g_rot[v] += inv_n * fg.pose_rot;
      g_trans[v] += inv_n * fg.pose_trans;
      g_la[v] += inv_n * fg.g_log_a;
      g_b[v] += inv_n * fg.g_b;
    }
    std::vector<Eigen::Vector3d> scale_grad;
    detail::scale_loss_grad(scene, scale_cap, scale_grad);
    for (std::size_t i = 0; i < scene.size(); ++i)
      grads.log_scales[i] += opts.weights.lambda_scale * scale_grad[i];

    double inf_sq = inf_sq_scene(grads, opts.lr);
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      if (opts.optimize_poses) {
        const double m = std::max((opts.lr_pose_rot * g_rot[v]).cwiseAbs().maxCoeff(),
                                  (opts.lr_pose_trans * g_trans[v]).cwiseAbs().maxCoeff());
        inf_sq = std::max(inf_sq, m * m);
      }
      if (opts.optimize_exposure) {
        const double m =
            std::max(std::abs(opts.lr_exposure * g_la[v]), std::abs(opts.lr_exposure * g_b[v]));
        inf_sq = std::max(inf_sq, m * m);
      }
    }
    const double norm = ctl.absorb(inf_sq);

    bool accepted = false;
    for (int group : group_order(ctl.last_group, groups)) {
      const bool gauss = group == kGroupAll || group == kGroupGaussians;
      const bool pose = opts.optimize_poses && (group == kGroupAll || group == kGroupPoses);
      const bool gain =
          opts.optimize_exposure && (group == kGroupAll || group == kGroupExposureGain);
      const bool bias =
          opts.optimize_exposure && (group == kGroupAll || group == kGroupExposureBias);
      double s = ctl.s_init;
      for (int bt = 0; bt <= opts.descent.max_backtracks; ++bt) {
        GaussianScene cand_scene = scene;
        std::vector<Camera> cand_cams = cameras;
        std::vector<ExposureParams> cand_exps = exposures;
        if (gauss) apply_gauss_step(cand_scene, grads, opts.lr, s * norm);
        for (std::size_t v = 0; v < cameras.size(); ++v) {
          ViewParams vp{cand_cams[v], cand_exps[v]};
          apply_view_step(vp, g_rot[v], g_trans[v], opts.lr_pose_rot, opts.lr_pose_trans, pose,
                          g_la[v], g_b[v], opts.lr_exposure, gain, bias, s * norm);
          cand_cams[v] = vp.cam;
          cand_exps[v] = vp.expo;
        }
        const LossParts cand = eval_loss(cand_scene, cand_cams, cand_exps);
        if (cand.total <= current.total) {
          scene = std::move(cand_scene);
          cameras = std::move(cand_cams);
          exposures = std::move(cand_exps);
          current = cand;
          accepted = true;
          ctl.report(group, bt == 0, s);
          break;
        }
        s *= 0.5;
      }
      if (accepted) break;
    }

    res.history.push_back({iter, current.total, current.rgb, current.depth, current.scale});
    stall = accepted ? 0 : stall + 1;
  }
  return res;
}

JointResult refine(GaussianScene& scene, const std::vector<Camera>& cameras,
                   const std::vector<ExposureParams>& exposures,
                   const std::vector<TrainingFrame>& frames, const RefineOptions& opts) {
  if (exposures.size() != cameras.size()) throw DataError("refine: exposures must match cameras");
  for (const TrainingFrame& f : frames)
    if (f.view < 0 || f.view >= static_cast<int>(cameras.size()))
      throw DataError("refine: frame references camera " + std::to_string(f.view));

  JointResult res;
  if (opts.iterations <= 0 || frames.empty()) return res;

  const RenderOptions ropts;
  const double inv_n = 1.0 / static_cast<double>(frames.size());
  StepController ctl;

  // group split for the fallback: appearance (color/opacity) vs geometry
  auto apply_refine_step = [&](GaussianScene& sc, const SceneGrads& g, int group, double scale) {
    GaussianLearningRates lr = opts.lr;
    if (group == kGroupGaussians) {  // appearance only
      lr.center = lr.log_scale = lr.rotation = 0.0;
    } else if (group == kGroupPoses) {  // geometry only
      lr.color = lr.opacity = 0.0;
    }
    apply_gauss_step(sc, g, lr, scale);
  };
  const std::vector<int> groups{kGroupAll, kGroupGaussians, kGroupPoses};

  // returns (loss, mean masked L1)
  auto eval_loss = [&](const GaussianScene& sc) {
    double total = 0.0, l1_total = 0.0;
    for (const TrainingFrame& f : frames) {
      double l1 = 0.0;
      total += refine_frame_eval(sc, cameras[static_cast<std::size_t>(f.view)],
                                 exposures[static_cast<std::size_t>(f.view)], f, opts.lambda_ssim,
                                 ropts, &l1, nullptr);
      l1_total += l1;
    }
    return std::pair<double, double>(total * inv_n, l1_total * inv_n);
  };

  auto [current, current_l1] = eval_loss(scene);
  int stall = 0;
  for (int iter = 0; iter < opts.iterations; ++iter) {
    if (!std::isfinite(current)) throw DivergenceError("refine: non-finite loss");
    if (stall >= opts.descent.stall_abort) {
      res.history.push_back({iter, current, current_l1, 0.0, 0.0});
      continue;
    }
    SceneGrads grads;
    grads.resize(scene.size());
    for (const TrainingFrame& f : frames) {
      FrameGrads fg;
      double l1 = 0.0;
      refine_frame_eval(scene, cameras[static_cast<std::size_t>(f.view)],
                        exposures[static_cast<std::size_t>(f.view)], f, opts.lambda_ssim, ropts,
                        &l1, &fg);
      for (std::size_t i = 0; i < scene.size(); ++i) {
        grads.centers[i] += inv_n * fg.scene.centers[i];
        grads.log_scales[i] += inv_n * fg.scene.log_scales[i];
        grads.rotations[i] += inv_n * fg.scene.rotations[i];
        grads.opacity_logits[i] += inv_n * fg.scene.opacity_logits[i];
        grads.colors[i] += inv_n * fg.scene.colors[i];
      }
    }
    const double norm = ctl.absorb(inf_sq_scene(grads, opts.lr));

    bool accepted = false;
    for (int group : group_order(ctl.last_group, groups)) {
      double s = ctl.s_init;
      for (int bt = 0; bt <= opts.descent.max_backtracks; ++bt) {
        GaussianScene cand = scene;
        apply_refine_step(cand, grads, group, s * norm);
        const auto [cl, cl1] = eval_loss(cand);
        if (cl <= current) {
          scene = std::move(cand);
          current = cl;
          current_l1 = cl1;
          accepted = true;
          ctl.report(group, bt == 0, s);
          break;
        }
        s *= 0.5;
      }
      if (accepted) break;
    }

    res.history.push_back({iter, current, current_l1, 0.0, 0.0});
    stall = accepted ? 0 : stall + 1;
  }
  return res;
}

}  // namespace splatfuse
