#include "splatfuse/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "splatfuse/fusion.hpp"
#include "splatfuse/rng.hpp"

namespace splatfuse {

using nlohmann::json;

std::string pipeline_version() { return "0.1.0"; }

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json load_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + ": " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return j;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json toggles_to_json(const StageToggles& t) {
  return {{"fusion", t.fusion}, {"mask", t.mask}, {"spgm", t.spgm}, {"bidirectional", t.bidirectional}};
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["dataset"] = c.dataset_dir.string();
  j["output"] = c.output_dir.string();
  j["seed"] = c.seed;
  j["stages"] = toggles_to_json(c.toggles);
  j["match"] = {{"grid_stride", c.match.grid_stride},
                {"patch_radius", c.match.patch_radius},
                {"min_zncc", c.match.min_zncc},
                {"max_displacement", c.match.max_displacement}};
  j["support_radius"] = c.support_radius;
  j["manage"] = {{"alpha", c.manage.alpha},   {"beta", c.manage.beta},
                 {"gamma", c.manage.gamma},   {"bins", c.manage.bins},
                 {"knn", c.manage.knn},       {"tau", {c.manage.tau1, c.manage.tau2}},
                 {"drop_rate", c.manage.drop_rate},
                 {"cluster_weights", {c.manage.w_near, c.manage.w_mid, c.manage.w_far}},
                 {"every", c.spgm_every}};
  j["weights"] = {{"beta", c.weights.beta},
                  {"lambda_scale", c.weights.lambda_scale},
                  {"lambda_ssim", c.weights.lambda_ssim}};
  j["stabilize"] = {{"iterations", c.stabilize.iterations},
                    {"lr_rot", c.stabilize.lr_rot},
                    {"lr_trans", c.stabilize.lr_trans},
                    {"lr_exposure", c.stabilize.lr_exposure},
                    {"optimize_exposure", c.stabilize.optimize_exposure}};
  j["joint"] = {{"iterations", c.joint.iterations},
                {"lr_center", c.joint.lr.center},
                {"lr_log_scale", c.joint.lr.log_scale},
                {"lr_rotation", c.joint.lr.rotation},
                {"lr_opacity", c.joint.lr.opacity},
                {"lr_color", c.joint.lr.color},
                {"lr_pose_rot", c.joint.lr_pose_rot},
                {"lr_pose_trans", c.joint.lr_pose_trans},
                {"lr_exposure", c.joint.lr_exposure},
                {"optimize_poses", c.joint.optimize_poses},
                {"optimize_exposure", c.joint.optimize_exposure}};
  j["refine"] = {{"iterations", c.refine.iterations}};
  j["init"] = {{"color_sigma", c.init.color_sigma},
               {"center_sigma", c.init.center_sigma},
               {"pose_trans", c.init.pose_trans},
               {"pose_rot_deg", c.init.pose_rot_deg}};
  j["ate_alignment"] = c.ate_alignment == AteAlignment::kSimilarity ? "similarity" : "rigid";
  return j;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"dataset", "output", "seed", "stages", "match", "support_radius", "manage",
                 "weights", "stabilize", "joint", "refine", "init", "ate_alignment"},
             "pipeline config");
  PipelineConfig c;
  if (!j.contains("dataset") || !j.contains("output"))
    throw ConfigError("pipeline config requires 'dataset' and 'output'");
  c.dataset_dir = base_dir / j.at("dataset").get<std::string>();
  c.output_dir = base_dir / j.at("output").get<std::string>();
  c.seed = get_or<uint64_t>(j, "seed", 0);

  if (j.contains("stages")) {
    const json& s = j.at("stages");
    check_keys(s, {"fusion", "mask", "spgm", "bidirectional"}, "stages");
    c.toggles.fusion = get_or(s, "fusion", true);
    c.toggles.mask = get_or(s, "mask", true);
    c.toggles.spgm = get_or(s, "spgm", true);
    c.toggles.bidirectional = get_or(s, "bidirectional", true);
  }
  if (j.contains("match")) {
    const json& m = j.at("match");
    check_keys(m, {"grid_stride", "patch_radius", "min_zncc", "max_displacement"}, "match");
    c.match.grid_stride = get_or(m, "grid_stride", c.match.grid_stride);
    c.match.patch_radius = get_or(m, "patch_radius", c.match.patch_radius);
    c.match.min_zncc = get_or(m, "min_zncc", c.match.min_zncc);
    c.match.max_displacement = get_or(m, "max_displacement", c.match.max_displacement);
  }
  c.support_radius = get_or(j, "support_radius", c.support_radius);
  if (j.contains("manage")) {
    const json& m = j.at("manage");
    check_keys(m, {"alpha", "beta", "gamma", "bins", "knn", "tau", "drop_rate", "cluster_weights",
                   "every"},
               "manage");
    c.manage.alpha = get_or(m, "alpha", c.manage.alpha);
    c.manage.beta = get_or(m, "beta", c.manage.beta);
    c.manage.gamma = get_or(m, "gamma", c.manage.gamma);
    c.manage.bins = get_or(m, "bins", c.manage.bins);
    c.manage.knn = get_or(m, "knn", c.manage.knn);
    if (m.contains("tau")) {
      const auto tau = m.at("tau").get<std::vector<double>>();
      if (tau.size() != 2) throw ConfigError("manage.tau must have 2 entries");
      c.manage.tau1 = tau[0];
      c.manage.tau2 = tau[1];
    }
    c.manage.drop_rate = get_or(m, "drop_rate", c.manage.drop_rate);
    if (m.contains("cluster_weights")) {
      const auto w = m.at("cluster_weights").get<std::vector<double>>();
      if (w.size() != 3) throw ConfigError("manage.cluster_weights must have 3 entries");
      c.manage.w_near = w[0];
      c.manage.w_mid = w[1];
      c.manage.w_far = w[2];
    }
    c.spgm_every = get_or(m, "every", c.spgm_every);
  }
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    check_keys(w, {"beta", "lambda_scale", "lambda_ssim"}, "weights");
    c.weights.beta = get_or(w, "beta", c.weights.beta);
    c.weights.lambda_scale = get_or(w, "lambda_scale", c.weights.lambda_scale);
    c.weights.lambda_ssim = get_or(w, "lambda_ssim", c.weights.lambda_ssim);
  }
  if (j.contains("stabilize")) {
    const json& s = j.at("stabilize");
    check_keys(s, {"iterations", "lr_rot", "lr_trans", "lr_exposure", "optimize_exposure"},
               "stabilize");
    c.stabilize.iterations = get_or(s, "iterations", c.stabilize.iterations);
    c.stabilize.lr_rot = get_or(s, "lr_rot", c.stabilize.lr_rot);
    c.stabilize.lr_trans = get_or(s, "lr_trans", c.stabilize.lr_trans);
    c.stabilize.lr_exposure = get_or(s, "lr_exposure", c.stabilize.lr_exposure);
    c.stabilize.optimize_exposure = get_or(s, "optimize_exposure", c.stabilize.optimize_exposure);
  }
  if (j.contains("joint")) {
    const json& s = j.at("joint");
    check_keys(s, {"iterations", "lr_center", "lr_log_scale", "lr_rotation", "lr_opacity",
                   "lr_color", "lr_pose_rot", "lr_pose_trans", "lr_exposure", "optimize_poses",
                   "optimize_exposure"},
               "joint");
    c.joint.iterations = get_or(s, "iterations", c.joint.iterations);
    c.joint.lr.center = get_or(s, "lr_center", c.joint.lr.center);
    c.joint.lr.log_scale = get_or(s, "lr_log_scale", c.joint.lr.log_scale);
    c.joint.lr.rotation = get_or(s, "lr_rotation", c.joint.lr.rotation);
    c.joint.lr.opacity = get_or(s, "lr_opacity", c.joint.lr.opacity);
    c.joint.lr.color = get_or(s, "lr_color", c.joint.lr.color);
    c.joint.lr_pose_rot = get_or(s, "lr_pose_rot", c.joint.lr_pose_rot);
    c.joint.lr_pose_trans = get_or(s, "lr_pose_trans", c.joint.lr_pose_trans);
    c.joint.lr_exposure = get_or(s, "lr_exposure", c.joint.lr_exposure);
    c.joint.optimize_poses = get_or(s, "optimize_poses", c.joint.optimize_poses);
    c.joint.optimize_exposure = get_or(s, "optimize_exposure", c.joint.optimize_exposure);
  }
  if (j.contains("refine")) {
    const json& s = j.at("refine");
    check_keys(s, {"iterations"}, "refine");
    c.refine.iterations = get_or(s, "iterations", c.refine.iterations);
  }
  if (j.contains("init")) {
    const json& s = j.at("init");
    check_keys(s, {"color_sigma", "center_sigma", "pose_trans", "pose_rot_deg"}, "init");
    c.init.color_sigma = get_or(s, "color_sigma", 0.0);
    c.init.center_sigma = get_or(s, "center_sigma", 0.0);
    c.init.pose_trans = get_or(s, "pose_trans", 0.0);
    c.init.pose_rot_deg = get_or(s, "pose_rot_deg", 0.0);
  }
  if (j.contains("ate_alignment")) {
    const std::string a = j.at("ate_alignment").get<std::string>();
    if (a == "similarity")
      c.ate_alignment = AteAlignment::kSimilarity;
    else if (a == "rigid")
      c.ate_alignment = AteAlignment::kRigid;
    else
      throw ConfigError("ate_alignment must be 'similarity' or 'rigid'");
  }

  c.stabilize.weights = c.weights;
  c.joint.weights = c.weights;
  c.joint.spgm = c.manage;
  c.joint.seed = c.seed;
  c.refine.lambda_ssim = c.weights.lambda_ssim;
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_json(load_json_file(path, "pipeline config"),
                                   path.parent_path());
}

DatasetManifest load_dataset_manifest(const std::filesystem::path& dataset_dir) {
  const json j = load_json_file(dataset_dir / "manifest.json", "dataset manifest");
  check_keys(j, {"seed", "cameras", "scene", "views", "floater_ids"}, "dataset manifest");
  DatasetManifest m;
  m.seed = get_or<uint64_t>(j, "seed", 0);
  m.cameras_file = get_or<std::string>(j, "cameras", "cameras.json");
  m.scene_file = get_or<std::string>(j, "scene", "scene_gt.ply");
  if (j.contains("floater_ids")) m.floater_ids = j.at("floater_ids").get<std::vector<int>>();
  if (!j.contains("views")) throw DataError("dataset manifest has no views");
  for (const json& v : j.at("views")) {
    check_keys(v, {"id", "role", "image", "depth", "clean", "cand_prev", "cand_next", "ref_prev",
                   "ref_next", "stencil"},
               "dataset view");
    DatasetView dv;
    dv.id = v.at("id").get<int>();
    dv.role = v.at("role").get<std::string>();
    if (dv.role != "train" && dv.role != "pseudo" && dv.role != "test")
      throw DataError("view role must be train/pseudo/test");
    dv.image = v.at("image").get<std::string>();
    dv.depth = v.at("depth").get<std::string>();
    dv.clean = get_or<std::string>(v, "clean", dv.image);
    dv.cand_prev = get_or<std::string>(v, "cand_prev", "");
    dv.cand_next = get_or<std::string>(v, "cand_next", "");
    dv.ref_prev = get_or(v, "ref_prev", -1);
    dv.ref_next = get_or(v, "ref_next", -1);
    dv.stencil = get_or<std::string>(v, "stencil", "");
    m.views.push_back(dv);
  }
  return m;
}

namespace {

std::string view_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view%03d", id);
  return buf;
}

}  // namespace

void write_synthetic_dataset(const SynthDatasetSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const SyntheticScene synth = generate_synthetic(spec.scene);

  fs::create_directories(dir / "images");
  fs::create_directories(dir / "depths");
  fs::create_directories(dir / "clean");
  if (!spec.pseudo_views.empty()) {
    fs::create_directories(dir / "candidates");
    fs::create_directories(dir / "stencils");
  }

  save_cameras(synth.cameras, dir / "cameras.json");
  save_ply(synth.scene, dir / "scene_gt.ply");

  auto is_in = [](const std::vector<int>& v, int id) {
    return std::find(v.begin(), v.end(), id) != v.end();
  };
  for (int id : spec.pseudo_views)
    if (id < 0 || id >= spec.scene.camera_count)
      throw ConfigError("pseudo view id out of range: " + std::to_string(id));
  for (int id : spec.test_views)
    if (id < 0 || id >= spec.scene.camera_count)
      throw ConfigError("test view id out of range: " + std::to_string(id));

  json views = json::array();
  for (int id = 0; id < spec.scene.camera_count; ++id) {
    const Image clean = synth.renders[static_cast<std::size_t>(id)].color_image();
    const Image depth = synth.renders[static_cast<std::size_t>(id)].depth_image();
    const std::string base = view_name(id);
    save_png(clean, dir / "clean" / (base + ".png"));
    save_pfm(depth, dir / "depths" / (base + ".pfm"));

    json v;
    v["id"] = id;
    v["depth"] = "depths/" + base + ".pfm";
    v["clean"] = "clean/" + base + ".png";

    if (is_in(spec.pseudo_views, id)) {
      // nearest non-pseudo, non-test neighbors serve as references
      int ref_prev = -1, ref_next = -1;
      for (int k = id - 1; k >= 0; --k)
        if (!is_in(spec.pseudo_views, k) && !is_in(spec.test_views, k)) {
          ref_prev = k;
          break;
        }
      for (int k = id + 1; k < spec.scene.camera_count; ++k)
        if (!is_in(spec.pseudo_views, k) && !is_in(spec.test_views, k)) {
          ref_next = k;
          break;
        }
      if (ref_prev < 0 || ref_next < 0)
        throw ConfigError("pseudo view " + std::to_string(id) +
                          " lacks a train reference on each side");

      Image corrupted = clean;
      Image stencil_union(clean.width, clean.height, 1);
      uint64_t cseed = spec.scene.seed * 1000003ULL + static_cast<uint64_t>(id);
      for (const auto& [mode, params] : spec.corruption) {
        Image stencil;
        corrupted = corrupt_frame(corrupted, mode, cseed++, params, &stencil);
        for (std::size_t i = 0; i < stencil.data.size(); ++i)
          stencil_union.data[i] = std::max(stencil_union.data[i], stencil.data[i]);
      }
      save_png(corrupted, dir / "images" / (base + ".png"));
      save_png(stencil_union, dir / "stencils" / (base + ".png"));
      // candidate restorations conditioned on each reference; clean renders
      // at desk scale (the diffusion stage is upstream of this artifact)
      char cand[64];
      std::snprintf(cand, sizeof(cand), "view%03d_from%03d.png", id, ref_prev);
      save_png(clean, dir / "candidates" / cand);
      v["cand_prev"] = std::string("candidates/") + cand;
      std::snprintf(cand, sizeof(cand), "view%03d_from%03d.png", id, ref_next);
      save_png(clean, dir / "candidates" / cand);
      v["cand_next"] = std::string("candidates/") + cand;
      v["ref_prev"] = ref_prev;
      v["ref_next"] = ref_next;
      v["stencil"] = "stencils/" + base + ".png";
      v["role"] = "pseudo";
      v["image"] = "images/" + base + ".png";
    } else {
      save_png(clean, dir / "images" / (base + ".png"));
      v["role"] = is_in(spec.test_views, id) ? "test" : "train";
      v["image"] = "images/" + base + ".png";
    }
    views.push_back(v);
  }

  json manifest;
  manifest["seed"] = spec.scene.seed;
  manifest["cameras"] = "cameras.json";
  manifest["scene"] = "scene_gt.ply";
  manifest["views"] = views;
  manifest["floater_ids"] = synth.floater_ids;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write dataset manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

namespace {

class ScopedLock {
 public:
  explicit ScopedLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    if (std::filesystem::exists(path_))
      throw DataError("output directory is locked by another run: " + path_.string());
    std::ofstream lock(path_);
    lock << "pid " << ::getpid() << "\n";
  }
  ~ScopedLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

 private:
  std::filesystem::path path_;
};

struct StageClock {
  std::vector<StageTiming>& timings;
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  ~StageClock() {
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timings.push_back({name, s});
  }
};

Eigen::Vector3d random_unit(SeededRng& rng) {
  Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-9) v = {rng.normal(), rng.normal(), rng.normal()};
  return v.normalized();
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config) {
  namespace fs = std::filesystem;
  RunManifest run;
  run.version = pipeline_version();

  const DatasetManifest data = load_dataset_manifest(config.dataset_dir);
  std::vector<Camera> gt_cameras = load_cameras(config.dataset_dir / data.cameras_file);
  GaussianScene gt_scene = load_ply(config.dataset_dir / data.scene_file);

  auto cam_index = [&](int id) -> std::size_t {
    for (std::size_t i = 0; i < gt_cameras.size(); ++i)
      if (gt_cameras[i].id == id) return i;
    throw DataError("dataset references unknown camera id " + std::to_string(id));
  };

  // fail fast: every referenced artifact must exist before any optimization
  for (const DatasetView& v : data.views) {
    for (const std::string& rel : {v.image, v.depth, v.clean}) {
      if (!fs::exists(config.dataset_dir / rel))
        throw DataError("dataset file missing: " + (config.dataset_dir / rel).string());
    }
    if (v.role == "pseudo") {
      if (v.cand_prev.empty() || v.cand_next.empty() || v.ref_prev < 0 || v.ref_next < 0)
        throw DataError("pseudo view " + std::to_string(v.id) + " lacks candidates/references");
      for (const std::string& rel : {v.cand_prev, v.cand_next})
        if (!fs::exists(config.dataset_dir / rel))
          throw DataError("dataset file missing: " + (config.dataset_dir / rel).string());
    }
  }

  fs::create_directories(config.output_dir);
  ScopedLock lock(config.output_dir);

  const json resolved = config_to_json(config);
  {
    std::ofstream out(config.output_dir / "config_resolved.json");
    out << resolved.dump(2) << "\n";
  }
  run.config_hash = hex64(fnv1a(resolved.dump()));

  // initial state: ground-truth scene/poses under configured perturbations
  SeededRng rng(config.seed * 2654435761ULL + 17);
  GaussianScene scene = gt_scene;
  for (Gaussian& g : scene.gaussians) {
    for (int c = 0; c < 3; ++c) {
      g.color[c] = std::clamp(g.color[c] + config.init.color_sigma * rng.normal(), 0.0, 1.0);
      g.center[c] += config.init.center_sigma * rng.normal();
    }
  }
  std::vector<Camera> cameras = gt_cameras;
  for (const DatasetView& v : data.views) {
    if (v.role == "test") continue;
    if (config.init.pose_trans == 0.0 && config.init.pose_rot_deg == 0.0) break;
    Camera& cam = cameras[cam_index(v.id)];
    PoseDelta d;
    d.rot = random_unit(rng) * (config.init.pose_rot_deg * M_PI / 180.0);
    d.trans = random_unit(rng) * config.init.pose_trans;
    cam.pose = d.apply_to(cam.pose);
  }

  // per-pseudo-view fusion and confidence masks
  fs::create_directories(config.output_dir / "fused");
  fs::create_directories(config.output_dir / "masks");
  fs::create_directories(config.output_dir / "corr");
  std::map<int, Image> fused_images;
  std::map<int, Image> masks;
  {
    StageClock clock{run.timings, "fuse+mask"};
    for (const DatasetView& v : data.views) {
      if (v.role != "pseudo") continue;
      const Image base = load_png(config.dataset_dir / v.image);
      Image fused = base;
      if (config.toggles.fusion) {
        FusionInput fin;
        fin.base = base;
        fin.candidate_prev = load_png(config.dataset_dir / v.cand_prev);
        fin.candidate_next = load_png(config.dataset_dir / v.cand_next);
        fin.depth_t = load_pfm(config.dataset_dir / v.depth);
        fin.cam_t = gt_cameras[cam_index(v.id)];
        fin.cam_prev = gt_cameras[cam_index(v.ref_prev)];
        fin.cam_next = gt_cameras[cam_index(v.ref_next)];
        const DatasetView* ref_prev_view = nullptr;
        const DatasetView* ref_next_view = nullptr;
        for (const DatasetView& rv : data.views) {
          if (rv.id == v.ref_prev) ref_prev_view = &rv;
          if (rv.id == v.ref_next) ref_next_view = &rv;
        }
        if (!ref_prev_view || !ref_next_view)
          throw DataError("pseudo view references a view missing from the manifest");
        fin.depth_prev = load_pfm(config.dataset_dir / ref_prev_view->depth);
        fin.depth_next = load_pfm(config.dataset_dir / ref_next_view->depth);
        const FusionMode mode =
            config.toggles.bidirectional ? FusionMode::kBidirectional : FusionMode::kPrevOnly;
        FusionResult fr = fuse_bidirectional(fin, mode);
        fused = fr.fused;
        Image wimg(base.width, base.height, 3);
        for (int y = 0; y < base.height; ++y)
          for (int x = 0; x < base.width; ++x) {
            wimg.at(x, y, 0) = fr.weight_prev.at(x, y);
            wimg.at(x, y, 1) = fr.weight_next.at(x, y);
          }
        save_pfm(wimg, config.output_dir / "fused" / (view_name(v.id) + "_weights.pfm"));
      } else {
        run.substitutions.push_back("fusion disabled: view " + std::to_string(v.id) +
                                    " uses the base frame");
      }
      save_png(fused, config.output_dir / "fused" / (view_name(v.id) + ".png"));

      Image mask(fused.width, fused.height, 1, 1.0f);
      if (config.toggles.mask) {
        const DatasetView* rp = nullptr;
        const DatasetView* rn = nullptr;
        for (const DatasetView& rv : data.views) {
          if (rv.id == v.ref_prev) rp = &rv;
          if (rv.id == v.ref_next) rn = &rv;
        }
        const Image img_prev = load_png(config.dataset_dir / rp->image);
        const Image img_next = load_png(config.dataset_dir / rn->image);
        const CorrespondenceSet m_prev = match_patches(fused, img_prev, config.match);
        const CorrespondenceSet m_next = match_patches(fused, img_next, config.match);
        save_correspondences_csv(m_prev,
                                 config.output_dir / "corr" / (view_name(v.id) + "_prev.csv"));
        save_correspondences_csv(m_next,
                                 config.output_dir / "corr" / (view_name(v.id) + "_next.csv"));
        mask = infer_mask(m_prev, m_next, fused.width, fused.height, config.support_radius);
      } else {
        run.substitutions.push_back("mask disabled: view " + std::to_string(v.id) +
                                    " trains with mask == 1");
      }
      save_mask_png(mask, config.output_dir / "masks" / (view_name(v.id) + ".png"));
      fused_images[v.id] = std::move(fused);
      masks[v.id] = std::move(mask);
    }
    if (!config.toggles.spgm)
      run.substitutions.push_back("spgm disabled: no management passes scheduled");
  }
  run.artifacts["fused"] = (config.output_dir / "fused").string();
  run.artifacts["masks"] = (config.output_dir / "masks").string();

  // training frames
  std::vector<TrainingFrame> frames;
  for (const DatasetView& v : data.views) {
    if (v.role == "test") continue;
    TrainingFrame f;
    f.view = static_cast<int>(cam_index(v.id));
    f.depth = load_pfm(config.dataset_dir / v.depth);
    if (v.role == "pseudo") {
      f.image = fused_images.at(v.id);
      f.mask = masks.at(v.id);
      f.is_pseudo = true;
    } else {
      f.image = load_png(config.dataset_dir / v.image);
    }
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw DataError("dataset has no trainable views");

  std::vector<ExposureParams> exposures(cameras.size());

  // stage 1: pose / exposure stabilization against the initial scene
  if (config.stabilize.iterations > 0) {
    StageClock clock{run.timings, "stabilize"};
    StabilizeOptions sopts = config.stabilize;
    sopts.weights = config.weights;
    const StabilizeResult sres = stabilize_poses(scene, frames, cameras, sopts);
    cameras = sres.cameras;
    for (std::size_t i = 0; i < exposures.size(); ++i) exposures[i] = sres.exposures[i];
    save_cameras(cameras, config.output_dir / "cameras_stabilized.json");
  }

  // stage 2: joint optimization with scheduled management passes
  {
    StageClock clock{run.timings, "joint"};
    JointOptions jopts = config.joint;
    jopts.weights = config.weights;
    jopts.spgm = config.manage;
    jopts.spgm_every = config.toggles.spgm ? config.spgm_every : 0;
    jopts.seed = config.seed;
    const JointResult jres = joint_optimize(scene, cameras, exposures, frames, jopts);
    save_history_csv(jres.history, config.output_dir / "joint_history.csv");
    save_ply(scene, config.output_dir / "scene_joint.ply");
  }

  // stage 3: appearance refinement
  if (config.refine.iterations > 0) {
    StageClock clock{run.timings, "refine"};
    RefineOptions ropts = config.refine;
    ropts.lambda_ssim = config.weights.lambda_ssim;
    const JointResult rres = refine(scene, cameras, exposures, frames, ropts);
    save_history_csv(rres.history, config.output_dir / "refine_history.csv");
  }
  save_ply(scene, config.output_dir / "scene_final.ply");
  save_cameras(cameras, config.output_dir / "cameras_final.json");
  run.artifacts["scene"] = (config.output_dir / "scene_final.ply").string();
  run.artifacts["cameras"] = (config.output_dir / "cameras_final.json").string();

  // evaluation on held-out views plus trajectory error on optimized poses
  json metrics;
  {
    StageClock clock{run.timings, "eval"};
    fs::create_directories(config.output_dir / "renders");
    json per_view = json::array();
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int test_count = 0;
    for (const DatasetView& v : data.views) {
      if (v.role != "test") continue;
      const Camera& cam = gt_cameras[cam_index(v.id)];
      const Image rendered = render(scene, cam).color_image();
      save_png(rendered, config.output_dir / "renders" / ("test_" + view_name(v.id) + ".png"));
      const Image clean = load_png(config.dataset_dir / v.clean);
      const double p = psnr(rendered, clean);
      const double s = ssim(rendered, clean);
      per_view.push_back({{"id", v.id}, {"psnr", p}, {"ssim", s}});
      psnr_sum += p;
      ssim_sum += s;
      ++test_count;
    }
    std::vector<RigidPose> est, ref;
    for (const DatasetView& v : data.views) {
      if (v.role == "test") continue;
      est.push_back(cameras[cam_index(v.id)].pose);
      ref.push_back(gt_cameras[cam_index(v.id)].pose);
    }
    metrics["per_view"] = per_view;
    if (test_count > 0) {
      metrics["psnr"] = psnr_sum / test_count;
      metrics["ssim"] = ssim_sum / test_count;
    }
    if (est.size() >= 3) {
      const AteResult ate = ate_rmse(est, ref, config.ate_alignment);
      metrics["ate_rmse"] = ate.rmse;
      metrics["ate_alignment"] =
          config.ate_alignment == AteAlignment::kSimilarity ? "similarity" : "rigid";
      metrics["ate_degenerate"] = ate.degenerate;
    }
  }
  run.metrics_json = metrics.dump(2);
  {
    std::ofstream out(config.output_dir / "eval_report.json");
    out << run.metrics_json << "\n";
  }
  run.artifacts["eval"] = (config.output_dir / "eval_report.json").string();

  // manifest, written atomically
  json manifest;
  manifest["config_hash"] = run.config_hash;
  manifest["version"] = run.version;
  json timings = json::array();
  for (const StageTiming& t : run.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  manifest["timings"] = timings;
  manifest["artifacts"] = run.artifacts;
  manifest["substitutions"] = run.substitutions;
  manifest["metrics"] = json::parse(run.metrics_json);
  const fs::path tmp = config.output_dir / "run_manifest.json.tmp";
  {
    std::ofstream out(tmp);
    out << manifest.dump(2) << "\n";
  }
  run.manifest_path = config.output_dir / "run_manifest.json";
  fs::rename(tmp, run.manifest_path);
  return run;
}

std::string run_ablation(const PipelineConfig& config) {
  struct Row {
    const char* name;
    StageToggles toggles;
  };
  const StageToggles base = config.toggles;
  std::vector<Row> rows = {
      {"full", base},
      {"no_mask", {base.fusion, false, base.spgm, base.bidirectional}},
      {"no_bid_fusion", {base.fusion, base.mask, base.spgm, false}},
      {"no_spgm", {base.fusion, base.mask, false, base.bidirectional}},
  };

  json table = json::array();
  std::filesystem::create_directories(config.output_dir);
  for (const Row& row : rows) {
    PipelineConfig c = config;
    c.toggles = row.toggles;
    c.output_dir = config.output_dir / row.name;
    const RunManifest m = run_pipeline(c);
    const json metrics = json::parse(m.metrics_json);
    json entry;
    entry["row"] = row.name;
    if (metrics.contains("psnr")) entry["psnr"] = metrics["psnr"];
    if (metrics.contains("ssim")) entry["ssim"] = metrics["ssim"];
    if (metrics.contains("ate_rmse")) entry["ate_rmse"] = metrics["ate_rmse"];
    table.push_back(entry);
  }

  const std::string text = table.dump(2);
  {
    std::ofstream out(config.output_dir / "ablation.json");
    out << text << "\n";
    std::ofstream csv(config.output_dir / "ablation.csv");
    csv << "row,psnr,ssim,ate_rmse\n";
    for (const json& e : table) {
      csv << e.value("row", "") << "," << (e.contains("psnr") ? std::to_string(e["psnr"].get<double>()) : "")
          << "," << (e.contains("ssim") ? std::to_string(e["ssim"].get<double>()) : "") << ","
          << (e.contains("ate_rmse") ? std::to_string(e["ate_rmse"].get<double>()) : "") << "\n";
    }
  }
  return text;
}

}  // namespace splatfuse
