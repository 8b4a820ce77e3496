#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splatfuse/confmask.hpp"
#include "splatfuse/manage.hpp"
#include "splatfuse/metrics.hpp"
#include "splatfuse/optim.hpp"
#include "splatfuse/synth.hpp"
#include "vendor_json_fwd.hpp"

namespace splatfuse {

// Stage switches mirroring the ablation rows; a disabled stage substitutes
// the identity (fused = base, mask == 1, no management passes).
struct StageToggles {
  bool fusion = true;
  bool mask = true;
  bool spgm = true;
  bool bidirectional = true;
};

// Perturbations applied to the initial scene/poses before optimization, so
// recovery experiments are configuration-driven.
struct InitPerturb {
  double color_sigma = 0.0;
  double center_sigma = 0.0;
  double pose_trans = 0.0;    // translation magnitude, m
  double pose_rot_deg = 0.0;  // rotation magnitude, degrees
};

struct PipelineConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path output_dir;
  uint64_t seed = 0;
  StageToggles toggles;
  MatchParams match;
  double support_radius = 8.0;
  ManageParams manage;
  int spgm_every = 40;  // joint-stage cadence when the spgm toggle is on
  LossWeights weights;
  StabilizeOptions stabilize;
  JointOptions joint;
  RefineOptions refine;
  InitPerturb init;
  AteAlignment ate_alignment = AteAlignment::kSimilarity;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);

// Dataset description. Every view has a ground-truth (clean) image; pseudo
// views additionally carry the two candidate restorations named by the
// view{t}_from{k} convention plus their reference view ids.
struct DatasetView {
  int id = 0;
  std::string role;  // "train" | "pseudo" | "test"
  std::string image, depth, clean;
  std::string cand_prev, cand_next;  // pseudo only
  int ref_prev = -1, ref_next = -1;  // pseudo only
  std::string stencil;               // optional corruption stencil
};

struct DatasetManifest {
  uint64_t seed = 0;
  std::string cameras_file;
  std::string scene_file;
  std::vector<DatasetView> views;
  std::vector<int> floater_ids;
};

DatasetManifest load_dataset_manifest(const std::filesystem::path& dataset_dir);

// Synthetic dataset writer used by the `synth` subcommand: scene, cameras,
// per-view renders (PNG + PFM depth), candidates and stencils for pseudo
// views, and the manifest.
struct SynthDatasetSpec {
  SyntheticSceneSpec scene;
  std::vector<int> pseudo_views;            // view ids rendered as pseudo frames
  std::vector<int> test_views;              // held out from training
  std::vector<std::pair<CorruptMode, CorruptParams>> corruption;  // applied to pseudo frames
};

void write_synthetic_dataset(const SynthDatasetSpec& spec, const std::filesystem::path& dir);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::vector<StageTiming> timings;
  std::map<std::string, std::string> artifacts;   // stage outputs by name
  std::vector<std::string> substitutions;         // identity stages (disabled toggles)
  nlohmann::json* metrics_doc = nullptr;          // not serialized directly; see metrics_json
  std::string metrics_json;                       // canonical metrics block
  std::filesystem::path manifest_path;
};

// Full run: ingest -> (fuse -> mask per pseudo view) -> stabilize -> joint
// (+ scheduled SPGM) -> refine -> eval. All intermediates are persisted under
// the output directory; the manifest is written atomically at the end.
RunManifest run_pipeline(const PipelineConfig& config);

// Executes the ablation row set {full, no-mask, no-bidirectional, no-spgm}
// from one config, writing each run under output/<row>/ plus a comparison
// table (JSON + CSV). Returns the table as JSON text.
std::string run_ablation(const PipelineConfig& config);

std::string pipeline_version();

}  // namespace splatfuse
