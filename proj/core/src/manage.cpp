#include "splatfuse/manage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "splatfuse/parallel.hpp"
#include "splatfuse/rng.hpp"

namespace splatfuse {

namespace {
constexpr double kDelta = 1e-8;    // range/denominator guard
constexpr double kLogEps = 1e-12;  // entropy log guard
}  // namespace

DepthPartition partition_depths(const std::vector<double>& depths, double tau1, double tau2) {
  if (depths.size() < 3) throw DataError("partition_depths: need at least 3 depths");
  if (!(tau1 > 0.0 && tau1 < tau2 && tau2 < 1.0))
    throw DataError("partition_depths: require 0 < tau1 < tau2 < 1");

  std::vector<double> sorted = depths;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double tau) {
    const double pos = tau * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  };

  DepthPartition p;
  p.tau1 = tau1;
  p.tau2 = tau2;
  p.b1 = quantile(tau1);
  p.b2 = quantile(tau2);
  p.cluster.resize(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const double d = depths[i];
    p.cluster[i] = d < p.b1 ? kNear : (d < p.b2 ? kMid : kFar);
  }
  return p;
}

std::vector<double> depth_scores(const std::vector<double>& depths) {
  if (depths.empty()) throw DataError("depth_scores: empty input");
  const auto [mn, mx] = std::minmax_element(depths.begin(), depths.end());
  const double range = *mx - *mn + kDelta;
  std::vector<double> s(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) s[i] = 1.0 - (depths[i] - *mn) / range;
  return s;
}

std::vector<double> density_estimate(const GaussianScene& scene, int k) {
  const std::size_t n = scene.size();
  if (k < 1) throw DataError("density_estimate: k must be positive");
  if (n <= static_cast<std::size_t>(k))
    throw DataError("density_estimate: scene must have more than k gaussians");

  std::vector<double> rho(n);
  parallel_for(n, [&](std::size_t i) {
    // brute-force k-NN: keep the k smallest distances in a sorted scratch
    std::vector<double> best(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
    const Eigen::Vector3d& ci = scene.gaussians[i].center;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (scene.gaussians[j].center - ci).squaredNorm();
      if (d2 < best.back()) {
        auto it = std::upper_bound(best.begin(), best.end(), d2);
        best.insert(it, d2);
        best.pop_back();
      }
    }
    double mean = 0.0;
    for (double d2 : best) mean += std::sqrt(d2);
    mean /= static_cast<double>(k);
    rho[i] = 1.0 / (mean + kDelta);
  });
  return rho;
}

double density_entropy(const std::vector<double>& rho, int bins) {
  if (bins < 2) throw DataError("density_entropy: need at least 2 bins");
  if (rho.empty()) throw DataError("density_entropy: empty input");

  const auto [mn, mx] = std::minmax_element(rho.begin(), rho.end());
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  if (*mx == *mn) {
    counts[0] = static_cast<double>(rho.size());  // single occupied bin
  } else {
    const double scale = static_cast<double>(bins) / (*mx - *mn);
    for (double v : rho) {
      int b = static_cast<int>((v - *mn) * scale);
      b = std::clamp(b, 0, bins - 1);
      counts[static_cast<std::size_t>(b)] += 1.0;
    }
  }
  const double total = static_cast<double>(rho.size());
  double h = 0.0;
  for (double c : counts) {
    const double p = c / total;
    h -= p * std::log(p + kLogEps);
  }
  return h / std::log(static_cast<double>(bins));
}

ImportanceReport importance_scores(const GaussianScene& scene, std::span<const Camera> cameras,
                                   const ManageParams& params) {
  if (cameras.empty()) throw DataError("importance_scores: need at least one camera");
  scene.check_consistent();
  const std::size_t n = scene.size();

  ImportanceReport rep;
  rep.ids = scene.ids;

  // Mean camera-frame depth over views where the gaussian is in front of the
  // camera. Gaussians visible nowhere fall back to the scene's max depth.
  rep.depth.assign(n, -1.0);
  double max_depth = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    for (const Camera& cam : cameras) {
      const double z = cam.pose.apply(scene.gaussians[i].center).z();
      if (z > kDefaultZNear) {
        sum += z;
        ++count;
      }
    }
    if (count > 0) {
      rep.depth[i] = sum / count;
      max_depth = std::max(max_depth, rep.depth[i]);
    }
  }
  for (double& d : rep.depth)
    if (d < 0.0) d = max_depth;

  rep.depth_score = depth_scores(rep.depth);
  rep.rho = density_estimate(scene, params.knn);
  rep.entropy = density_entropy(rep.rho, params.bins);
  rep.partition = partition_depths(rep.depth, params.tau1, params.tau2);
  rep.cluster = rep.partition.cluster;

  const auto [rmn, rmx] = std::minmax_element(rep.rho.begin(), rep.rho.end());
  const double rrange = *rmx - *rmn + kDelta;
  rep.rho_norm.resize(n);
  rep.density_score.resize(n);
  rep.unified.resize(n);
  rep.drop_prob.resize(n);
  const double cluster_w[3] = {params.w_near, params.w_mid, params.w_far};
  for (std::size_t i = 0; i < n; ++i) {
    rep.rho_norm[i] = (rep.rho[i] - *rmn) / rrange;
    rep.density_score[i] =
        rep.rho_norm[i] * (1.0 - params.beta * rep.entropy) + rep.entropy * params.gamma;
    rep.unified[i] = params.alpha * rep.depth_score[i] + (1.0 - params.alpha) * rep.density_score[i];
    rep.drop_prob[i] =
        std::clamp(params.drop_rate * cluster_w[rep.cluster[i]] * rep.unified[i], 0.0, 1.0);
  }
  return rep;
}

DropResult apply_drop(const GaussianScene& scene, const ImportanceReport& report,
                      const ManageParams& params, uint64_t seed) {
  if (report.drop_prob.size() != scene.size())
    throw DataError("apply_drop: report does not match the scene");
  if (!(params.drop_rate >= 0.0 && params.drop_rate <= 1.0))
    throw DataError("apply_drop: drop rate must lie in [0,1]");
  if (params.w_near < 0.0 || params.w_mid < 0.0 || params.w_far < 0.0)
    throw DataError("apply_drop: cluster weights must be non-negative");

  // Recompute p_drop from the report's scores so callers can rescale r
  // without rescoring.
  const double cluster_w[3] = {params.w_near, params.w_mid, params.w_far};
  SeededRng rng(seed);
  DropResult out;
  out.log.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double p = std::clamp(
        params.drop_rate * cluster_w[report.cluster[i]] * report.unified[i], 0.0, 1.0);
    const bool kept = rng.uniform() >= p;
    out.log.push_back({scene.ids[i], report.unified[i], p, kept});
    if (kept) {
      out.scene.gaussians.push_back(scene.gaussians[i]);
      out.scene.ids.push_back(scene.ids[i]);
    }
  }
  return out;
}

nlohmann::json report_to_json(const ImportanceReport& report) {
  nlohmann::json j;
  j["ids"] = report.ids;
  j["depth"] = report.depth;
  j["depth_score"] = report.depth_score;
  j["rho"] = report.rho;
  j["rho_norm"] = report.rho_norm;
  j["density_score"] = report.density_score;
  j["unified"] = report.unified;
  j["cluster"] = report.cluster;
  j["drop_prob"] = report.drop_prob;
  j["entropy"] = report.entropy;
  j["partition"] = {{"tau1", report.partition.tau1},
                    {"tau2", report.partition.tau2},
                    {"b1", report.partition.b1},
                    {"b2", report.partition.b2}};
  return j;
}

void save_report(const ImportanceReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << report_to_json(report).dump(2) << "\n";
}

}  // namespace splatfuse
