#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "splatfuse/confmask.hpp"
#include "splatfuse/fusion.hpp"
#include "splatfuse/manage.hpp"
#include "splatfuse/metrics.hpp"
#include "splatfuse/optim.hpp"
#include "splatfuse/pipeline.hpp"
#include "splatfuse/render.hpp"
#include "splatfuse/synth.hpp"

namespace fs = std::filesystem;
using namespace splatfuse;

namespace {

// exit codes: 0 ok, 2 config error, 3 data error, 4 numerical divergence
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kDivergedExit = 4;

std::vector<std::pair<CorruptMode, CorruptParams>> parse_corruption(
    const std::vector<std::string>& specs) {
  std::vector<std::pair<CorruptMode, CorruptParams>> out;
  for (const std::string& s : specs) {
    const auto colon = s.find(':');
    CorruptParams params;
    std::string name = s;
    if (colon != std::string::npos) {
      name = s.substr(0, colon);
      params.amount = std::stod(s.substr(colon + 1));
    }
    out.emplace_back(corrupt_mode_from_string(name), params);
  }
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"sparse-view gaussian-splatting pipeline: synthetic data, pseudo-frame fusion, "
               "confidence masks, scene management, joint optimization and evaluation"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  SyntheticSceneSpec sspec;
  std::string synth_out = "dataset";
  std::vector<int> pseudo_views, test_views;
  std::vector<std::string> corrupt_specs;
  synth->add_option("--seed", sspec.seed, "RNG seed");
  synth->add_option("--gaussians", sspec.gaussian_count, "surface gaussian count");
  synth->add_option("--cameras", sspec.camera_count, "camera count on the arc");
  synth->add_option("--floaters", sspec.floater_count, "labeled floater count");
  synth->add_option("--floater-offset", sspec.floater_offset, "min distance from surfaces (m)");
  synth->add_option("--width", sspec.width, "image width");
  synth->add_option("--height", sspec.height, "image height");
  synth->add_option("--arc", sspec.arc_degrees, "camera arc span (deg)");
  synth->add_option("--radius", sspec.ring_radius, "camera arc radius (m)");
  synth->add_option("--pseudo", pseudo_views, "view ids emitted as pseudo frames");
  synth->add_option("--test", test_views, "view ids held out for evaluation");
  synth->add_option("--corrupt", corrupt_specs,
                    "corruptions for pseudo frames, mode[:amount] "
                    "(gaussian-blur, hole-mask, color-shift, ghost-overlay)");
  synth->add_option("--out", synth_out, "output dataset directory");

  // ---- render ----
  auto* rendercmd = app.add_subcommand("render", "render a scene from one camera");
  std::string r_scene, r_cameras, r_out = "render";
  int r_camera = 0;
  rendercmd->add_option("--scene", r_scene, "input PLY")->required();
  rendercmd->add_option("--cameras", r_cameras, "camera JSON file")->required();
  rendercmd->add_option("--camera", r_camera, "camera id to render");
  rendercmd->add_option("--out", r_out, "output basename (.png / .pfm)");

  // ---- fuse ----
  auto* fuse = app.add_subcommand("fuse", "bidirectional pseudo-frame fusion");
  std::string f_base, f_prev, f_next, f_cameras, f_out, f_weights;
  std::vector<std::string> f_depths;
  bool f_single = false;
  fuse->add_option("--base", f_base, "base frame PNG")->required();
  fuse->add_option("--cand-prev", f_prev, "candidate conditioned on the previous reference")->required();
  fuse->add_option("--cand-next", f_next, "candidate conditioned on the next reference")->required();
  fuse->add_option("--cameras", f_cameras, "camera JSON: [t, prev, next] order")->required();
  fuse->add_option("--depths", f_depths, "depth PFMs: t prev next")->expected(3)->required();
  fuse->add_option("--out", f_out, "fused PNG")->required();
  fuse->add_option("--weights-out", f_weights, "PFM with W1 in R, W2 in G");
  fuse->add_flag("--single-reference", f_single, "use only the previous reference");

  // ---- mask ----
  auto* mask = app.add_subcommand("mask", "confidence mask from mutual-NN correspondences");
  std::string m_fused, m_prev, m_next, m_out, m_corr_prev, m_corr_next;
  std::string m_import_prev, m_import_next;
  MatchParams mparams;
  double m_support = 8.0;
  mask->add_option("--fused", m_fused, "fused frame PNG")->required();
  mask->add_option("--ref-prev", m_prev, "previous reference PNG");
  mask->add_option("--ref-next", m_next, "next reference PNG");
  mask->add_option("--import-prev", m_import_prev, "precomputed correspondences CSV (prev)");
  mask->add_option("--import-next", m_import_next, "precomputed correspondences CSV (next)");
  mask->add_option("--out", m_out, "mask PNG")->required();
  mask->add_option("--corr-prev-out", m_corr_prev, "write prev correspondences CSV");
  mask->add_option("--corr-next-out", m_corr_next, "write next correspondences CSV");
  mask->add_option("--stride", mparams.grid_stride, "keypoint grid stride");
  mask->add_option("--patch-radius", mparams.patch_radius, "ZNCC patch radius");
  mask->add_option("--min-zncc", mparams.min_zncc, "match acceptance threshold");
  mask->add_option("--max-displacement", mparams.max_displacement, "search bound (-1: full image)");
  mask->add_option("--support-radius", m_support, "mask support radius (px)");

  // ---- manage ----
  auto* manage = app.add_subcommand("manage", "scene-perception gaussian management pass");
  std::string g_scene, g_cameras, g_out, g_report;
  ManageParams gparams;
  std::vector<double> g_tau, g_weights;
  uint64_t g_seed = 0;
  manage->add_option("--scene", g_scene, "input PLY")->required();
  manage->add_option("--cameras", g_cameras, "camera JSON")->required();
  manage->add_option("--r", gparams.drop_rate, "drop rate r");
  manage->add_option("--tau", g_tau, "depth percentiles tau1,tau2")->delimiter(',');
  manage->add_option("--weights", g_weights, "cluster weights near,mid,far")->delimiter(',');
  manage->add_option("--alpha", gparams.alpha, "depth/density blend");
  manage->add_option("--beta", gparams.beta, "entropy damping");
  manage->add_option("--gamma", gparams.gamma, "entropy floor");
  manage->add_option("--knn", gparams.knn, "density neighbor count");
  manage->add_option("--bins", gparams.bins, "entropy histogram bins");
  manage->add_option("--seed", g_seed, "Bernoulli seed");
  manage->add_option("--out", g_out, "output PLY")->required();
  manage->add_option("--report", g_report, "importance report JSON");

  // ---- optimize ----
  auto* optimize = app.add_subcommand("optimize", "run the optimization stages on a dataset");
  std::string o_config;
  bool o_skip_fusion = false;
  optimize->add_option("--config", o_config, "pipeline config JSON")->required();
  optimize->add_flag("--no-restoration", o_skip_fusion,
                     "disable the fusion and mask stages (identity substitution)");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM/ATE evaluation report");
  std::string e_scene, e_cameras, e_dataset, e_out = "eval_report.json";
  std::string e_alignment = "similarity";
  eval->add_option("--scene", e_scene, "scene PLY to evaluate")->required();
  eval->add_option("--cameras", e_cameras, "optimized camera JSON (for ATE)");
  eval->add_option("--dataset", e_dataset, "dataset directory")->required();
  eval->add_option("--alignment", e_alignment, "ATE alignment: similarity|rigid");
  eval->add_option("--out", e_out, "report JSON path");

  // ---- run / ablate ----
  auto* runcmd = app.add_subcommand("run", "full pipeline from a config file");
  std::string run_config;
  runcmd->add_option("--config", run_config, "pipeline config JSON")->required();

  auto* ablate = app.add_subcommand("ablate", "run the ablation row set from one config");
  std::string ab_config;
  ablate->add_option("--config", ab_config, "pipeline config JSON")->required();

  CLI11_PARSE(app, argc, argv);

  if (*synth) {
    SynthDatasetSpec spec;
    spec.scene = sspec;
    spec.pseudo_views = pseudo_views;
    spec.test_views = test_views;
    spec.corruption = parse_corruption(corrupt_specs);
    write_synthetic_dataset(spec, synth_out);
    std::printf("dataset written to %s\n", synth_out.c_str());
    return 0;
  }

  if (*rendercmd) {
    const GaussianScene scene = load_ply(r_scene);
    const std::vector<Camera> cams = load_cameras(r_cameras);
    const Camera* cam = nullptr;
    for (const Camera& c : cams)
      if (c.id == r_camera) cam = &c;
    if (!cam) throw DataError("camera id not found: " + std::to_string(r_camera));
    const RenderOutput out = render(scene, *cam);
    save_png(out.color_image(), r_out + ".png");
    save_pfm(out.depth_image(), r_out + ".pfm");
    std::printf("wrote %s.png and %s.pfm\n", r_out.c_str(), r_out.c_str());
    return 0;
  }

  if (*fuse) {
    const std::vector<Camera> cams = load_cameras(f_cameras);
    if (cams.size() < 3) throw DataError("fuse: camera file must list cameras [t, prev, next]");
    FusionInput fin;
    fin.base = load_png(f_base);
    fin.candidate_prev = load_png(f_prev);
    fin.candidate_next = load_png(f_next);
    fin.depth_t = load_pfm(f_depths[0]);
    fin.depth_prev = load_pfm(f_depths[1]);
    fin.depth_next = load_pfm(f_depths[2]);
    fin.cam_t = cams[0];
    fin.cam_prev = cams[1];
    fin.cam_next = cams[2];
    const FusionResult out =
        fuse_bidirectional(fin, f_single ? FusionMode::kPrevOnly : FusionMode::kBidirectional);
    save_png(out.fused, f_out);
    if (!f_weights.empty()) {
      Image w(out.fused.width, out.fused.height, 3);
      for (int y = 0; y < w.height; ++y)
        for (int x = 0; x < w.width; ++x) {
          w.at(x, y, 0) = out.weight_prev.at(x, y);
          w.at(x, y, 1) = out.weight_next.at(x, y);
        }
      save_pfm(w, f_weights);
    }
    std::printf("fused frame written to %s\n", f_out.c_str());
    return 0;
  }

  if (*mask) {
    const Image fused = load_png(m_fused);
    CorrespondenceSet prev, next;
    if (!m_import_prev.empty())
      prev = load_correspondences_csv(m_import_prev);
    else if (!m_prev.empty())
      prev = match_patches(fused, load_png(m_prev), mparams);
    else
      throw ConfigError("mask: provide --ref-prev or --import-prev");
    if (!m_import_next.empty())
      next = load_correspondences_csv(m_import_next);
    else if (!m_next.empty())
      next = match_patches(fused, load_png(m_next), mparams);
    else
      throw ConfigError("mask: provide --ref-next or --import-next");
    if (!m_corr_prev.empty()) save_correspondences_csv(prev, m_corr_prev);
    if (!m_corr_next.empty()) save_correspondences_csv(next, m_corr_next);
    const Image out = infer_mask(prev, next, fused.width, fused.height, m_support);
    save_mask_png(out, m_out);
    std::printf("mask written to %s (%zu + %zu correspondences)\n", m_out.c_str(),
                prev.matches.size(), next.matches.size());
    return 0;
  }

  if (*manage) {
    if (!g_tau.empty()) {
      if (g_tau.size() != 2) throw ConfigError("--tau needs two values");
      gparams.tau1 = g_tau[0];
      gparams.tau2 = g_tau[1];
    }
    if (!g_weights.empty()) {
      if (g_weights.size() != 3) throw ConfigError("--weights needs three values");
      gparams.w_near = g_weights[0];
      gparams.w_mid = g_weights[1];
      gparams.w_far = g_weights[2];
    }
    const GaussianScene scene = load_ply(g_scene);
    const std::vector<Camera> cams = load_cameras(g_cameras);
    const ImportanceReport report = importance_scores(scene, cams, gparams);
    const DropResult result = apply_drop(scene, report, gparams, g_seed);
    save_ply(result.scene, g_out);
    if (!g_report.empty()) save_report(report, g_report);
    std::printf("kept %zu of %zu gaussians -> %s\n", result.scene.size(), scene.size(),
                g_out.c_str());
    return 0;
  }

  if (*optimize) {
    PipelineConfig cfg = load_pipeline_config(o_config);
    if (o_skip_fusion) {
      cfg.toggles.fusion = false;
      cfg.toggles.mask = false;
    }
    const RunManifest m = run_pipeline(cfg);
    std::printf("optimization finished; manifest at %s\n", m.manifest_path.c_str());
    return 0;
  }

  if (*eval) {
    const GaussianScene scene = load_ply(e_scene);
    const DatasetManifest data = load_dataset_manifest(e_dataset);
    const std::vector<Camera> gt_cams = load_cameras(fs::path(e_dataset) / data.cameras_file);
    auto find_cam = [&](const std::vector<Camera>& cams, int id) -> const Camera* {
      for (const Camera& c : cams)
        if (c.id == id) return &c;
      return nullptr;
    };

    nlohmann::json per_view = nlohmann::json::array();
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int count = 0;
    for (const DatasetView& v : data.views) {
      if (v.role != "test") continue;
      const Camera* cam = find_cam(gt_cams, v.id);
      if (!cam) throw DataError("camera id missing: " + std::to_string(v.id));
      const Image rendered = render(scene, *cam).color_image();
      const Image clean = load_png(fs::path(e_dataset) / v.clean);
      const double p = psnr(rendered, clean);
      const double s = ssim(rendered, clean);
      per_view.push_back({{"id", v.id}, {"psnr", p}, {"ssim", s}});
      psnr_sum += p;
      ssim_sum += s;
      ++count;
    }
    nlohmann::json report;
    report["per_view"] = per_view;
    if (count > 0) {
      report["psnr"] = psnr_sum / count;
      report["ssim"] = ssim_sum / count;
    }
    if (!e_cameras.empty()) {
      const std::vector<Camera> est_cams = load_cameras(e_cameras);
      std::vector<RigidPose> est, ref;
      for (const DatasetView& v : data.views) {
        if (v.role == "test") continue;
        const Camera* a = find_cam(est_cams, v.id);
        const Camera* b = find_cam(gt_cams, v.id);
        if (a && b) {
          est.push_back(a->pose);
          ref.push_back(b->pose);
        }
      }
      if (est.size() >= 3) {
        const AteAlignment mode =
            e_alignment == "rigid" ? AteAlignment::kRigid : AteAlignment::kSimilarity;
        const AteResult ate = ate_rmse(est, ref, mode);
        report["ate_rmse"] = ate.rmse;
        report["ate_alignment"] = e_alignment;
      }
    }
    std::ofstream out(e_out);
    out << report.dump(2) << "\n";
    std::printf("%s\n", report.dump(2).c_str());
    return 0;
  }

  if (*runcmd) {
    const RunManifest m = run_pipeline(load_pipeline_config(run_config));
    std::printf("run complete; manifest at %s\nmetrics:\n%s\n", m.manifest_path.c_str(),
                m.metrics_json.c_str());
    return 0;
  }

  if (*ablate) {
    const std::string table = run_ablation(load_pipeline_config(ab_config));
    std::printf("%s\n", table.c_str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kDivergedExit;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
