#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "splatfuse/geometry.hpp"
#include "splatfuse/scene.hpp"
#include "vendor_json_fwd.hpp"

namespace splatfuse {

enum DepthCluster : int { kNear = 0, kMid = 1, kFar = 2 };

struct DepthPartition {
  double tau1 = 0.33, tau2 = 0.66;
  double b1 = 0.0, b2 = 0.0;           // depth boundaries, b1 <= b2
  std::vector<int> cluster;            // DepthCluster per input depth
};

// Quantiles by sort + linear interpolation between order statistics
// (position (n-1)*tau). near: d < b1, mid: b1 <= d < b2, far: d >= b2.
DepthPartition partition_depths(const std::vector<double>& depths, double tau1, double tau2);

// s_z = 1 - (d - d_min) / (d_max - d_min + delta), in [0,1]; nearest -> 1.
std::vector<double> depth_scores(const std::vector<double>& depths);

// rho_i = 1 / (mean distance to the k nearest centers + delta), brute force.
std::vector<double> density_estimate(const GaussianScene& scene, int k = 8);

// Normalized histogram entropy of the density values: B equal bins over
// [min,max], H = -(1/log B) * sum p_b log(p_b + eps).
double density_entropy(const std::vector<double>& rho, int bins = 32);

struct ManageParams {
  double alpha = 0.5;   // depth-vs-density blend
  double beta = 0.5;    // entropy damping of the density term
  double gamma = 0.5;   // entropy floor of the density term
  int bins = 32;
  int knn = 8;
  double tau1 = 0.33, tau2 = 0.66;
  double drop_rate = 0.1;               // r
  double w_near = 1.5, w_mid = 1.0, w_far = 0.5;
};

struct ImportanceReport {
  std::vector<int> ids;
  std::vector<double> depth;          // mean camera-frame depth over visible views
  std::vector<double> depth_score;    // s_z
  std::vector<double> rho;            // raw density
  std::vector<double> rho_norm;       // min-max normalized
  std::vector<double> density_score;  // s_rho
  std::vector<double> unified;        // S
  std::vector<int> cluster;
  std::vector<double> drop_prob;
  double entropy = 0.0;               // H(rho)
  DepthPartition partition;
};

// Full per-gaussian scoring: depth score, entropy-aware density score,
// unified importance, cluster assignment and drop probabilities.
ImportanceReport importance_scores(const GaussianScene& scene, std::span<const Camera> cameras,
                                   const ManageParams& params = {});

struct DropLogEntry {
  int id = 0;
  double unified = 0.0;
  double drop_prob = 0.0;
  bool kept = true;
};

struct DropResult {
  GaussianScene scene;
  std::vector<DropLogEntry> log;
};

// Bernoulli keep mask m_i ~ Bern(1 - p_drop_i) drawn in id order from the
// seed; dropped gaussians are removed, the log records every decision.
DropResult apply_drop(const GaussianScene& scene, const ImportanceReport& report,
                      const ManageParams& params, uint64_t seed);

nlohmann::json report_to_json(const ImportanceReport& report);
void save_report(const ImportanceReport& report, const std::filesystem::path& path);

}  // namespace splatfuse
