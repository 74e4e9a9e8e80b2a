#pragma once

// Comparison methods: drive to a ring of preferred radius around a target
// point with grid A* or RRT*, and an iterative visual-prompting search that
// refits a Gaussian proposal to the oracle's picks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "baseplace/geometry.hpp"
#include "baseplace/gridmap.hpp"
#include "baseplace/oracle.hpp"
#include "baseplace/outcome.hpp"
#include "baseplace/projection.hpp"
#include "baseplace/rng.hpp"

namespace baseplace {

// ---------------------------------------------------------------------------
// Grid search

/// Path length on the 8-connected grid as exact move counts, so costs from
/// different searches compare without rounding.
struct MoveCost {
  long long straight = 0;
  long long diagonal = 0;

  double cells() const { return static_cast<double>(straight) + std::numbers::sqrt2 * static_cast<double>(diagonal); }
  friend bool operator==(const MoveCost&, const MoveCost&) = default;
  friend MoveCost operator+(MoveCost a, MoveCost b) { return {a.straight + b.straight, a.diagonal + b.diagonal}; }
};

inline bool operator<(const MoveCost& a, const MoveCost& b) { return a.cells() < b.cells(); }

/// Passability view of a width x height grid.
struct GridGraph {
  int width = 0, height = 0;
  std::function<bool(int, int)> passable;

  bool ok(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height && passable(x, y); }

  /// Neighbours of (x, y); a diagonal step needs both orthogonal cells it
  /// passes between to be passable.
  template <typename F>
  void for_each_neighbor(int x, int y, F&& f) const {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (!dx && !dy) continue;
        const int nx = x + dx, ny = y + dy;
        if (!ok(nx, ny)) continue;
        const bool diag = dx && dy;
        if (diag && !(ok(x + dx, y) && ok(x, y + dy))) continue;
        f(nx, ny, diag ? MoveCost{0, 1} : MoveCost{1, 0});
      }
  }
};

inline double octile(CellIndex a, CellIndex b) {
  const double dx = std::abs(a.ix - b.ix), dy = std::abs(a.iy - b.iy);
  return std::max(dx, dy) + (std::numbers::sqrt2 - 1.0) * std::min(dx, dy);
}

struct GridPath {
  std::vector<CellIndex> cells;  // start .. goal
  MoveCost cost;
};

/// A* from `start` to the cheapest of `goals`.  The heuristic is the octile
/// distance to the nearest goal, which is consistent, so the first goal
/// popped is optimal.
inline std::optional<GridPath> astar(const GridGraph& g, CellIndex start, const std::vector<CellIndex>& goals) {
  if (!g.ok(start.ix, start.iy) || goals.empty()) return std::nullopt;
  const auto n = static_cast<std::size_t>(g.width) * g.height;
  auto lin = [&](int x, int y) { return static_cast<std::size_t>(y) * g.width + x; };
  std::vector<std::uint8_t> is_goal(n, 0);
  for (const auto& c : goals)
    if (g.ok(c.ix, c.iy)) is_goal[lin(c.ix, c.iy)] = 1;
  auto h = [&](int x, int y) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : goals) best = std::min(best, octile({x, y}, c));
    return best;
  };
  std::vector<MoveCost> cost(n);
  std::vector<std::uint8_t> seen(n, 0), closed(n, 0);
  std::vector<std::int64_t> parent(n, -1);
  struct Entry {
    double f;
    double g;
    std::size_t idx;
    bool operator>(const Entry& o) const { return f != o.f ? f > o.f : (g != o.g ? g < o.g : idx > o.idx); }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const std::size_t s = lin(start.ix, start.iy);
  seen[s] = 1;
  open.push({h(start.ix, start.iy), 0.0, s});
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    if (closed[e.idx]) continue;
    closed[e.idx] = 1;
    const int x = static_cast<int>(e.idx % g.width), y = static_cast<int>(e.idx / g.width);
    if (is_goal[e.idx]) {
      GridPath p;
      p.cost = cost[e.idx];
      for (std::int64_t i = static_cast<std::int64_t>(e.idx); i >= 0; i = parent[static_cast<std::size_t>(i)])
        p.cells.push_back({static_cast<int>(i % g.width), static_cast<int>(i / g.width)});
      std::reverse(p.cells.begin(), p.cells.end());
      return p;
    }
    g.for_each_neighbor(x, y, [&](int nx, int ny, MoveCost step) {
      const std::size_t ni = lin(nx, ny);
      if (closed[ni]) return;
      MoveCost c = cost[e.idx] + step;
      if (!seen[ni] || c < cost[ni]) {
        seen[ni] = 1;
        cost[ni] = c;
        parent[ni] = static_cast<std::int64_t>(e.idx);
        open.push({c.cells() + h(nx, ny), c.cells(), ni});
      }
    });
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Ring goals

struct PlacementPlan {
  Pose2D placement;
  double path_length = 0.0;  // meters
  std::vector<Vec2> path;
  nlohmann::json details = nlohmann::json::object();
};

/// Free cells whose center lies within `tolerance` of the circle of radius
/// `radius` around `target`.
inline std::vector<CellIndex> ring_goal_cells(const FreeSet& free, const Vec2& target, double radius, double tolerance) {
  std::vector<CellIndex> out;
  const auto& f = free.frame();
  for (int iy = 0; iy < f.height; ++iy)
    for (int ix = 0; ix < f.width; ++ix) {
      if (!free.contains(CellIndex{ix, iy})) continue;
      if (std::abs((f.grid_to_world({ix, iy}) - target).norm() - radius) <= tolerance) out.push_back({ix, iy});
    }
  return out;
}

inline GridGraph free_graph(const FreeSet& free) {
  return {free.frame().width, free.frame().height, [&free](int x, int y) { return free.contains(CellIndex{x, y}); }};
}

inline Outcome<PlacementPlan> astar_plan(const Pose2D& start, const Vec2& target, const FreeSet& free,
                                         double radius = 0.7, std::optional<double> tolerance = std::nullopt) {
  const auto& f = free.frame();
  const double tol = tolerance.value_or(f.resolution);
  auto s = f.world_to_grid(start.position());
  if (!s || !free.contains(*s)) return Abort{AbortReason::PlanningFailure, "start outside the free set"};
  auto goals = ring_goal_cells(free, target, radius, tol);
  if (goals.empty()) return Abort{AbortReason::PlanningFailure, "no free cell on the goal ring"};
  auto path = astar(free_graph(free), *s, goals);
  if (!path) return Abort{AbortReason::PlanningFailure, "goal ring unreachable"};
  PlacementPlan plan;
  for (const auto& c : path->cells) plan.path.push_back(f.grid_to_world(c));
  plan.path_length = path->cost.cells() * f.resolution;
  plan.placement = facing(plan.path.back(), target);
  plan.details = {{"planner", "astar"},
                  {"straight_moves", path->cost.straight},
                  {"diagonal_moves", path->cost.diagonal},
                  {"goal_cells", goals.size()}};
  return plan;
}

// ---------------------------------------------------------------------------
// RRT*

struct RrtConfig {
  int max_iters = 5000;
  double step = 0.2;
  double margin = 1.5;  // sampling window around start and target
  std::optional<double> tolerance;  // goal band half-width; grid resolution if unset
};

inline nlohmann::json to_json(const RrtConfig& c) {
  return {{"max_iters", c.max_iters}, {"step", c.step}, {"margin", c.margin}};
}

namespace detail {

inline bool segment_free(const FreeSet& free, const Vec2& a, const Vec2& b) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / (0.5 * free.frame().resolution))));
  for (int i = 0; i <= n; ++i)
    if (!free.contains(Vec2(a + (b - a) * (static_cast<double>(i) / n)))) return false;
  return true;
}

}  // namespace detail

inline Outcome<PlacementPlan> rrt_star_plan(const Pose2D& start, const Vec2& target, const FreeSet& free, Pcg32& rng,
                                            const RrtConfig& cfg = {}, double radius = 0.7) {
  const auto& f = free.frame();
  const double tol = cfg.tolerance.value_or(f.resolution);
  const Vec2 s = start.position();
  if (!free.contains(s)) return Abort{AbortReason::PlanningFailure, "start outside the free set"};
  auto in_goal = [&](const Vec2& p) { return std::abs((p - target).norm() - radius) <= tol; };

  PlacementPlan plan;
  if (in_goal(s)) {
    plan.path = {s};
    plan.placement = facing(s, target);
    plan.details = {{"planner", "rrt_star"}, {"nodes", 1}, {"iterations", 0}};
    return plan;
  }

  // Sampling window, clipped to the map.
  const Vec2 lo_map = f.origin, hi_map = f.origin + Vec2(f.width, f.height) * f.resolution;
  Vec2 lo = s.cwiseMin(target).array() - cfg.margin, hi = s.cwiseMax(target).array() + cfg.margin;
  lo = lo.cwiseMax(lo_map);
  hi = hi.cwiseMin(hi_map);
  double free_area = 0.0;
  for (int iy = 0; iy < f.height; ++iy)
    for (int ix = 0; ix < f.width; ++ix) {
      Vec2 c = f.grid_to_world({ix, iy});
      if ((c.array() >= lo.array()).all() && (c.array() <= hi.array()).all() && free.contains(CellIndex{ix, iy}))
        free_area += f.resolution * f.resolution;
    }
  if (free_area <= 0.0) return Abort{AbortReason::PlanningFailure, "no free space in sampling window"};
  const double gamma = 2.0 * std::sqrt(3.0 * free_area / std::numbers::pi);

  struct Node {
    Vec2 p;
    int parent;
    double cost;
    std::vector<int> children;
  };
  std::vector<Node> nodes{{s, -1, 0.0, {}}};
  std::vector<int> goal_nodes;

  std::function<void(int, double)> shift = [&](int i, double delta) {
    for (int c : nodes[static_cast<std::size_t>(i)].children) {
      nodes[static_cast<std::size_t>(c)].cost += delta;
      shift(c, delta);
    }
  };

  std::vector<int> near;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Vec2 q(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()));
    if (!free.contains(q)) continue;
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      double d = (nodes[i].p - q).squaredNorm();
      if (d < best) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }
    const Vec2 from = nodes[static_cast<std::size_t>(nearest)].p;
    const double dist = std::sqrt(best);
    const Vec2 x = dist > cfg.step ? Vec2(from + (q - from) * (cfg.step / dist)) : q;
    if (!detail::segment_free(free, from, x)) continue;

    const double n = static_cast<double>(nodes.size() + 1);
    const double r = std::max(gamma * std::sqrt(std::log(n) / n), cfg.step);
    near.clear();
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if ((nodes[i].p - x).squaredNorm() <= r * r) near.push_back(static_cast<int>(i));

    int parent = nearest;
    double cost = nodes[static_cast<std::size_t>(nearest)].cost + (x - from).norm();
    for (int i : near) {
      const auto& nd = nodes[static_cast<std::size_t>(i)];
      double c = nd.cost + (x - nd.p).norm();
      if (c < cost && i != nearest && detail::segment_free(free, nd.p, x)) {
        cost = c;
        parent = i;
      }
    }
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({x, parent, cost, {}});
    nodes[static_cast<std::size_t>(parent)].children.push_back(id);

    for (int i : near) {
      if (i == parent) continue;
      auto& nd = nodes[static_cast<std::size_t>(i)];
      const double c = cost + (x - nd.p).norm();
      if (c + 1e-12 < nd.cost && detail::segment_free(free, x, nd.p)) {
        auto& siblings = nodes[static_cast<std::size_t>(nd.parent)].children;
        siblings.erase(std::find(siblings.begin(), siblings.end(), i));
        const double delta = c - nd.cost;
        nd.parent = id;
        nd.cost = c;
        nodes[static_cast<std::size_t>(id)].children.push_back(i);
        shift(i, delta);
      }
    }
    if (in_goal(x)) goal_nodes.push_back(id);
  }

  if (goal_nodes.empty()) return Abort{AbortReason::PlanningFailure, "no tree node reached the goal ring"};
  int best_goal = goal_nodes.front();
  for (int i : goal_nodes)
    if (nodes[static_cast<std::size_t>(i)].cost < nodes[static_cast<std::size_t>(best_goal)].cost) best_goal = i;
  for (int i = best_goal; i >= 0; i = nodes[static_cast<std::size_t>(i)].parent)
    plan.path.push_back(nodes[static_cast<std::size_t>(i)].p);
  std::reverse(plan.path.begin(), plan.path.end());
  plan.path_length = nodes[static_cast<std::size_t>(best_goal)].cost;
  plan.placement = facing(plan.path.back(), target);
  plan.details = {{"planner", "rrt_star"},
                  {"nodes", nodes.size()},
                  {"iterations", cfg.max_iters},
                  {"gamma", gamma},
                  {"goal_nodes", goal_nodes.size()}};
  return plan;
}

// ---------------------------------------------------------------------------
// Target-point placement

enum class PathPlanner { AStar, RrtStar };

inline Outcome<PlacementPlan> plan_to_ring(PathPlanner planner, const Pose2D& start, const Vec2& target,
                                           const FreeSet& free, Pcg32& rng, double radius = 0.7,
                                           const RrtConfig& rrt = {}) {
  if (planner == PathPlanner::AStar) return astar_plan(start, target, free, radius, rrt.tolerance);
  return rrt_star_plan(start, target, free, rng, rrt, radius);
}

/// Drives to the preferred radius around the footprint centroid.
inline Outcome<PlacementPlan> place_object_center(const AffordanceContext& ctx, const Pose2D& start,
                                                  const FreeSet& free, PathPlanner planner, Pcg32& rng,
                                                  double radius = 0.7, const RrtConfig& rrt = {}) {
  auto r = plan_to_ring(planner, start, ctx.centroid, free, rng, radius, rrt);
  if (auto* p = std::get_if<PlacementPlan>(&r)) p->placement = facing(p->placement.position(), ctx.centroid);
  return r;
}

/// Drives to the preferred radius around the affordance keypoint.
inline Outcome<PlacementPlan> place_affordance_point(const AffordanceContext& ctx, const Pose2D& start,
                                                     const FreeSet& free, PathPlanner planner, Pcg32& rng,
                                                     double radius = 0.7, const RrtConfig& rrt = {}) {
  if (!ctx.keypoint) throw std::invalid_argument("place_affordance_point: keypoint not set");
  return plan_to_ring(planner, start, *ctx.keypoint, free, rng, radius, rrt);
}

// ---------------------------------------------------------------------------
// Iterative visual prompting

struct PivotConfig {
  int samples = 20;
  int iterations = 4;
  int top = 3;
  double sigma0 = 1.0;
  double shrink = 0.5;
  double min_variance = 0.05 * 0.05;
  int attempts_per_sample = 100;
};

inline nlohmann::json to_json(const PivotConfig& c) {
  return {{"samples", c.samples}, {"iterations", c.iterations}, {"top", c.top},          {"sigma0", c.sigma0},
          {"shrink", c.shrink},   {"min_variance", c.min_variance}, {"attempts_per_sample", c.attempts_per_sample}};
}

struct PivotState {
  Vec2 mean = Vec2::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
  int iteration = 0;
};

/// Covariance after one refit: scaled by `shrink`, eigenvalues floored.
inline Eigen::Matrix2d shrink_covariance(const Eigen::Matrix2d& cov, double shrink, double min_variance) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(shrink * cov);
  Eigen::Vector2d ev = es.eigenvalues().cwiseMax(min_variance);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct PivotIteration {
  PivotState state;              // distribution the candidates came from
  std::vector<Vec2> candidates;  // marker index = position
  std::vector<int> reply;
};

struct PivotResult {
  std::optional<Pose2D> placement;
  std::optional<Abort> abort;
  std::vector<PivotIteration> iterations;
};

/// `view` supplies the cues and rasters the oracle sees each round.
inline PivotResult pivot_place(const Vec2& start, const Vec2& face_toward, const FreeSet& free,
                               const std::string& instruction, Oracle& oracle, Pcg32& rng,
                               const PivotConfig& cfg = {}, const Cues& cues = {},
                               const std::function<std::vector<Attachment>(const std::vector<IndexedPoint>&)>& view = {}) {
  PivotResult out;
  PivotState st;
  st.mean = start;
  st.covariance = Eigen::Matrix2d::Identity() * cfg.sigma0 * cfg.sigma0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    st.iteration = it;
    PivotIteration rec;
    rec.state = st;
    Eigen::LLT<Eigen::Matrix2d> llt(st.covariance);
    const Eigen::Matrix2d L = llt.matrixL();
    const int budget = cfg.samples * cfg.attempts_per_sample;
    for (int a = 0; a < budget && static_cast<int>(rec.candidates.size()) < cfg.samples; ++a) {
      Vec2 z(rng.normal(), rng.normal());
      Vec2 x = st.mean + L * z;
      if (free.contains(x)) rec.candidates.push_back(x);
    }
    if (rec.candidates.empty()) {
      out.abort = Abort{AbortReason::PlanningFailure, "no collision-free candidate sampled"};
      out.iterations.push_back(std::move(rec));
      return out;
    }
    const bool last = it == cfg.iterations;
    OracleQuery q;
    q.kind = QueryKind::RankCandidates;
    q.instruction = instruction;
    q.cues = cues;
    q.want = last ? 1 : std::min<int>(cfg.top, static_cast<int>(rec.candidates.size()));
    std::vector<IndexedPoint> markers;
    for (std::size_t m = 0; m < rec.candidates.size(); ++m) {
      q.options.push_back({static_cast<int>(m), rec.candidates[m], 0.0});
      markers.push_back({static_cast<int>(m), rec.candidates[m]});
    }
    if (view && oracle.wants_images()) q.attachments = view(markers);
    auto reply = oracle.query_validated(q);
    if (!reply) {
      out.abort = Abort{AbortReason::OracleFailure, "ranking reply invalid after retry"};
      out.iterations.push_back(std::move(rec));
      return out;
    }
    rec.reply = reply->indices;
    out.iterations.push_back(rec);
    if (last) {
      out.placement = facing(rec.candidates[static_cast<std::size_t>(rec.reply.front())], face_toward);
      return out;
    }
    Vec2 sum = Vec2::Zero();
    for (int m : rec.reply) sum += rec.candidates[static_cast<std::size_t>(m)];
    st.mean = sum / static_cast<double>(rec.reply.size());
    st.covariance = shrink_covariance(st.covariance, cfg.shrink, cfg.min_variance);
  }
  return out;
}

}  // namespace baseplace
