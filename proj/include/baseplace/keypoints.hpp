#pragma once

// Affordance point selection: cluster the target's per-pixel features with
// cosine k-means, turn each cluster into a 3D proposal, prune near-duplicates
// and let the oracle choose one as the keypoint g.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "baseplace/geometry.hpp"
#include "baseplace/image.hpp"
#include "baseplace/oracle.hpp"
#include "baseplace/outcome.hpp"
#include "baseplace/rng.hpp"
#include "baseplace/scene.hpp"

namespace baseplace {

inline constexpr int kDefaultClusters = 20;
inline constexpr double kPruneDistance = 0.08;
inline constexpr int kMaxLloydIterations = 100;

struct PixelIndex {
  int u = 0, v = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

/// Dense per-pixel features plus the object mask they belong to.
struct FeatureGrid {
  int width = 0, height = 0, dim = 0;
  std::vector<float> data;  // row-major, `dim` floats per pixel
  Mask mask;

  FeatureGrid() = default;
  FeatureGrid(int w, int h, int d)
      : width(w), height(h), dim(d), data(static_cast<std::size_t>(w) * h * d, 0.0f), mask(w, h, 0) {}

  std::span<float> at(int u, int v) {
    return {data.data() + (static_cast<std::size_t>(v) * width + u) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const float> at(int u, int v) const {
    return {data.data() + (static_cast<std::size_t>(v) * width + u) * dim, static_cast<std::size_t>(dim)};
  }

  std::vector<PixelIndex> masked_pixels() const {
    std::vector<PixelIndex> px;
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u)
        if (mask.at(u, v)) px.push_back({u, v});
    return px;
  }
};

// ---------------------------------------------------------------------------
// Synthetic features

struct FeatureSynthesis {
  int fourier_dims = 12;
  double length_scale = 0.12;  // meters, smoothness of the background field
  int lobe_dims = 6;
  double lobe_width = 0.05;    // meters
  double lobe_gain = 4.0;
};

/// Features for every masked pixel with a finite depth: a smooth random field
/// over the 3D surface point (seeded by the object), a strong extra component
/// near the object's ground-truth handle, and a constant bias.
inline FeatureGrid synthesize_features(const SceneObject& object, const Capture& cap, const CameraModel& camera,
                                       const FeatureSynthesis& cfg = {}) {
  const int dim = cfg.fourier_dims + cfg.lobe_dims + 1;
  FeatureGrid grid(cap.depth.width(), cap.depth.height(), dim);
  Pcg32 rng = stream_for(object.feature_seed, "features");
  std::vector<Vec3> freq(static_cast<std::size_t>(cfg.fourier_dims));
  std::vector<double> phase(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) {
    freq[i] = Vec3(rng.normal(), rng.normal(), rng.normal()) / cfg.length_scale;
    phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  Eigen::VectorXd lobe(cfg.lobe_dims);
  for (int i = 0; i < cfg.lobe_dims; ++i) lobe[i] = std::abs(rng.normal()) + 0.5;
  lobe.normalize();

  const auto& k = camera.intrinsics;
  for (int v = 0; v < grid.height; ++v)
    for (int u = 0; u < grid.width; ++u) {
      const double z = cap.depth.at(u, v);
      if (!cap.mask.at(u, v) || !std::isfinite(z)) continue;
      grid.mask.at(u, v) = 1;
      const Vec3 p = camera.camera_to_world * Vec3((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
      auto f = grid.at(u, v);
      for (int i = 0; i < cfg.fourier_dims; ++i)
        f[static_cast<std::size_t>(i)] = static_cast<float>(std::cos(freq[static_cast<std::size_t>(i)].dot(p) +
                                                                      phase[static_cast<std::size_t>(i)]));
      double h = 0.0;
      if (object.gt_keypoint) {
        const double d2 = (p - *object.gt_keypoint).squaredNorm();
        h = cfg.lobe_gain * std::exp(-d2 / (2.0 * cfg.lobe_width * cfg.lobe_width));
      }
      for (int i = 0; i < cfg.lobe_dims; ++i)
        f[static_cast<std::size_t>(cfg.fourier_dims + i)] = static_cast<float>(h * lobe[i]);
      f[static_cast<std::size_t>(dim - 1)] = 1.0f;
    }
  return grid;
}

// ---------------------------------------------------------------------------
// Clustering

struct Clustering {
  int k = 0;
  bool k_reduced = false;              // fewer masked pixels than requested clusters
  std::vector<PixelIndex> pixels;      // masked pixels, row-major order
  std::vector<int> assignment;         // per pixel, 0..k-1
  std::vector<Eigen::VectorXd> centroids;  // unit length
  std::vector<double> cost_history;    // sum of (1 - cos) after each assignment
  int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd unit_feature(std::span<const float> f) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) x[static_cast<Eigen::Index>(i)] = f[i];
  const double n = x.norm();
  if (n > 0.0) x /= n;
  return x;
}

inline int nearest_centroid(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& c, double* sim = nullptr) {
  int best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < c.size(); ++j) {
    double s = x.dot(c[j]);
    if (s > best_sim) {
      best_sim = s;
      best = static_cast<int>(j);
    }
  }
  if (sim) *sim = best_sim;
  return best;
}

}  // namespace detail

/// Sum over points of (1 - cosine similarity to the assigned centroid).
inline double clustering_cost(const std::vector<Eigen::VectorXd>& points, const std::vector<int>& assignment,
                              const std::vector<Eigen::VectorXd>& centroids) {
  double cost = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    cost += 1.0 - points[i].dot(centroids[static_cast<std::size_t>(assignment[i])]);
  return cost;
}

/// Spherical k-means: k-means++ seeding, Lloyd iterations until the
/// assignment stops changing or the iteration cap is hit.
inline Clustering cluster_points(const std::vector<Eigen::VectorXd>& points, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (points.empty()) throw std::invalid_argument("no points to cluster");
  Clustering out;
  out.k = std::min<int>(k, static_cast<int>(points.size()));
  out.k_reduced = out.k < k;
  const std::size_t n = points.size();
  Pcg32 rng = stream_for(seed, "kmeans");

  // k-means++ on cosine distance.
  std::vector<Eigen::VectorXd>& c = out.centroids;
  c.push_back(points[rng.below(static_cast<std::uint32_t>(n))]);
  std::vector<double> d(n);
  while (static_cast<int>(c.size()) < out.k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      detail::nearest_centroid(points[i], c, &s);
      d[i] = std::max(0.0, 1.0 - s);
      total += d[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d[i] <= 0.0) continue;  // never re-pick a point already at a centroid
        pick = i;
        r -= d[i];
        if (r < 0.0) break;
      }
    } else {
      pick = rng.below(static_cast<std::uint32_t>(n));
    }
    c.push_back(points[pick]);
  }

  std::vector<int>& a = out.assignment;
  a.assign(n, -1);
  for (int it = 0; it < kMaxLloydIterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int j = detail::nearest_centroid(points[i], c);
      changed |= j != a[i];
      a[i] = j;
    }
    out.cost_history.push_back(clustering_cost(points, a, c));
    out.iterations = it + 1;
    if (!changed) break;

    std::vector<Eigen::VectorXd> sum(c.size(), Eigen::VectorXd::Zero(points[0].size()));
    std::vector<int> count(c.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[static_cast<std::size_t>(a[i])] += points[i];
      ++count[static_cast<std::size_t>(a[i])];
    }
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (count[j] == 0) {
        // Reseed to the point least similar to the abandoned centroid.
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (points[i].dot(c[j]) < points[far].dot(c[j])) far = i;
        c[j] = points[far];
        continue;
      }
      const double norm = sum[j].norm();
      if (norm > 0.0) c[j] = sum[j] / norm;
    }
  }
  return out;
}

inline Clustering cluster_features(const FeatureGrid& features, int k, std::uint64_t seed) {
  std::vector<PixelIndex> px = features.masked_pixels();
  if (px.empty()) throw std::invalid_argument("feature grid has no masked pixels");
  std::vector<Eigen::VectorXd> points;
  points.reserve(px.size());
  for (const auto& p : px) points.push_back(detail::unit_feature(features.at(p.u, p.v)));
  Clustering out = cluster_points(points, k, seed);
  out.pixels = std::move(px);
  return out;
}

// ---------------------------------------------------------------------------
// Proposals

struct KeypointProposal {
  PixelIndex pixel;
  Vec3 point3d = Vec3::Zero();
  int cluster_id = 0;
};

/// Greedy filter in input order: a proposal is dropped when it lies strictly
/// closer than `min_distance` to one already kept.
inline std::vector<KeypointProposal> prune_proposals(const std::vector<KeypointProposal>& in,
                                                     double min_distance = kPruneDistance) {
  std::vector<KeypointProposal> kept;
  for (const auto& p : in) {
    bool close = std::any_of(kept.begin(), kept.end(), [&](const KeypointProposal& q) {
      return (p.point3d - q.point3d).norm() < min_distance;
    });
    if (!close) kept.push_back(p);
  }
  return kept;
}

/// One proposal per cluster: the masked pixel most similar to the cluster
/// centroid, lifted to 3D with its depth.  Pruned in cluster-id order.
inline std::vector<KeypointProposal> propose_keypoints(const Clustering& clusters, const FeatureGrid& features,
                                                       const DepthImage& depth, const CameraModel& camera,
                                                       double min_distance = kPruneDistance) {
  const auto& k = camera.intrinsics;
  std::vector<Eigen::VectorXd> unit;
  unit.reserve(clusters.pixels.size());
  for (const auto& p : clusters.pixels) unit.push_back(detail::unit_feature(features.at(p.u, p.v)));

  std::vector<KeypointProposal> raw;
  for (int j = 0; j < static_cast<int>(clusters.centroids.size()); ++j) {
    const auto& c = clusters.centroids[static_cast<std::size_t>(j)];
    std::optional<std::size_t> best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < unit.size(); ++i) {
      const auto& p = clusters.pixels[i];
      if (!std::isfinite(depth.at(p.u, p.v))) continue;
      double s = unit[i].dot(c);
      if (s > best_sim) {
        best_sim = s;
        best = i;
      }
    }
    if (!best) continue;
    const PixelIndex px = clusters.pixels[*best];
    const double z = depth.at(px.u, px.v);
    const Vec3 pw = camera.camera_to_world * Vec3((px.u - k.cx) * z / k.fx, (px.v - k.cy) * z / k.fy, z);
    raw.push_back({px, pw, j});
  }
  return prune_proposals(raw, min_distance);
}

/// The oracle picks one proposal; its planar position becomes g.
inline Outcome<Vec2> select_affordance_point(const std::vector<KeypointProposal>& proposals,
                                             const std::string& instruction, Oracle& oracle,
                                             std::vector<Attachment> attachments = {}) {
  if (proposals.empty()) return Abort{AbortReason::GroundingFailure, "no keypoint proposals"};
  if (proposals.size() == 1) return Vec2(proposals.front().point3d.head<2>());
  OracleQuery q;
  q.kind = QueryKind::Keypoint;
  q.instruction = instruction;
  q.attachments = std::move(attachments);
  for (std::size_t i = 0; i < proposals.size(); ++i)
    q.options.push_back({static_cast<int>(i), proposals[i].point3d.head<2>(), 0.0});
  auto reply = oracle.query_validated(q);
  if (!reply) return Abort{AbortReason::OracleFailure, "keypoint reply invalid after retry"};
  return Vec2(proposals[static_cast<std::size_t>(reply->indices.front())].point3d.head<2>());
}

// ---------------------------------------------------------------------------
// Storage: <stem>.bin holds little-endian float32 features, <stem>.json the
// shape, <stem>.mask.pgm the mask.

inline void save_feature_grid(const std::filesystem::path& stem, const FeatureGrid& g) {
  std::string bytes;
  bytes.reserve(g.data.size() * 4);
  for (float f : g.data) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p.string();
  };
  detail::write_bytes(with(".bin"), bytes);
  nlohmann::json side = {{"height", g.height}, {"width", g.width}, {"dim", g.dim},
                         {"dtype", "float32"},  {"endianness", "little"}};
  detail::write_bytes(with(".json"), side.dump(2) + "\n");
  GrayImage m(g.width, g.height);
  for (int v = 0; v < g.height; ++v)
    for (int u = 0; u < g.width; ++u) m.at(u, v) = g.mask.at(u, v) ? 255 : 0;
  detail::write_bytes(with(".mask.pgm"), encode_pgm(m));
}

inline FeatureGrid load_feature_grid(const std::filesystem::path& stem) {
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p.string();
  };
  auto side = nlohmann::json::parse(detail::read_bytes(with(".json")));
  FeatureGrid g(side.at("width").get<int>(), side.at("height").get<int>(), side.at("dim").get<int>());
  std::string bytes = detail::read_bytes(with(".bin"));
  if (bytes.size() != g.data.size() * 4) throw std::runtime_error("feature file size does not match sidecar");
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{static_cast<unsigned char>(bytes[i * 4 + b])} << (8 * b);
    g.data[i] = std::bit_cast<float>(bits);
  }
  if (std::filesystem::exists(with(".mask.pgm"))) {
    GrayImage m = decode_pgm(detail::read_bytes(with(".mask.pgm")));
    if (m.width() != g.width || m.height() != g.height) throw std::runtime_error("mask size does not match features");
    for (int v = 0; v < g.height; ++v)
      for (int u = 0; u < g.width; ++u) g.mask.at(u, v) = m.at(u, v) > 127 ? 1 : 0;
  }
  return g;
}

}  // namespace baseplace
