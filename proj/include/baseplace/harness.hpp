#pragma once

// Evaluation harness: builds randomized trials from task files, runs every
// placement method on them with a scripted (or remote) oracle, scores the
// results with a geometric success model and aggregates reports.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>
#include <json.hpp>

#include "baseplace/baselines.hpp"
#include "baseplace/gridmap.hpp"
#include "baseplace/keypoints.hpp"
#include "baseplace/optimizer.hpp"
#include "baseplace/oracle.hpp"
#include "baseplace/projection.hpp"
#include "baseplace/scene.hpp"
#include "baseplace/trace.hpp"

namespace baseplace {

// ---------------------------------------------------------------------------
// Methods and ablation modes

enum class Method {
  Ours,
  ObjectCenterAStar,
  ObjectCenterRrtStar,
  AffordancePointAStar,
  AffordancePointRrtStar,
  PivotRgb,
  PivotMultimodal,
};

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> kAll = {Method::Ours,
                                           Method::ObjectCenterAStar,
                                           Method::ObjectCenterRrtStar,
                                           Method::AffordancePointAStar,
                                           Method::AffordancePointRrtStar,
                                           Method::PivotRgb,
                                           Method::PivotMultimodal};
  return kAll;
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Ours: return "ours";
    case Method::ObjectCenterAStar: return "object_center_astar";
    case Method::ObjectCenterRrtStar: return "object_center_rrt_star";
    case Method::AffordancePointAStar: return "affordance_point_astar";
    case Method::AffordancePointRrtStar: return "affordance_point_rrt_star";
    case Method::PivotRgb: return "pivot_rgb";
    case Method::PivotMultimodal: return "pivot_multimodal";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

enum class ProjectionMode { Full, NoArrows, NoDirectionA, None };

inline std::string to_string(ProjectionMode m) {
  switch (m) {
    case ProjectionMode::Full: return "full";
    case ProjectionMode::NoArrows: return "no_12_arrows";
    case ProjectionMode::NoDirectionA: return "no_direction_a";
    case ProjectionMode::None: return "none";
  }
  return "?";
}

inline ProjectionMode projection_from_string(const std::string& s) {
  for (auto m : {ProjectionMode::Full, ProjectionMode::NoArrows, ProjectionMode::NoDirectionA, ProjectionMode::None})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown projection mode '" + s + "'");
}

/// Overlays drawn on the rasters attached to ranking queries.
inline RenderLayers layers_for(ProjectionMode m) {
  RenderLayers l;
  switch (m) {
    case ProjectionMode::Full: break;
    case ProjectionMode::NoArrows: l.arrows = false; break;
    case ProjectionMode::NoDirectionA: l.selected = false; l.fan = false; break;
    case ProjectionMode::None: l.arrows = false; l.selected = false; l.fan = false; l.footprint = false; break;
  }
  return l;
}

inline Cues cues_for(ProjectionMode m) {
  RenderLayers l = layers_for(m);
  return {true, l.arrows, l.selected && l.fan};
}

// ---------------------------------------------------------------------------
// Success model

struct SuccessModel {
  double r_star = 0.7;
  double reach_tolerance = 0.25;
  bool require_fan = false;
  double clearance = kDefaultClearance;
};

/// Collision first, then distance to the true keypoint, then approach side.
inline TrialEvaluation evaluate_success(const Pose2D& placement, const GroundTruth& truth, const FreeSet& free,
                                        const SuccessModel& model) {
  if (!(model.reach_tolerance > 0.0)) throw std::invalid_argument("reach tolerance must be positive");
  const Vec2 x = placement.position();
  if (!free.contains(x)) return {false, "collision"};
  if (std::abs((x - truth.keypoint).norm() - model.r_star) > model.reach_tolerance) return {false, "distance"};
  if (model.require_fan && !truth.in_fan(x)) return {false, "direction"};
  return {true, "ok"};
}

// ---------------------------------------------------------------------------
// Tasks and trials

struct TaskBundle {
  TaskSpec task;
  SceneSpec scene;
};

inline TaskBundle load_task_bundle(const std::filesystem::path& task_path) {
  TaskBundle b;
  b.task = load_task_file(task_path);
  if (b.task.name.empty()) b.task.name = task_path.stem().string();
  if (b.task.scene_path.empty()) throw SceneError("task '" + b.task.name + "' names no scene");
  b.scene = load_scene_file(b.task.scene_path);
  b.scene.object(b.task.object_id);
  return b;
}

/// Task list document: {"schema": 1, "tasks": ["tasks/a.json", ...]}.
inline std::vector<TaskBundle> load_suite(const std::filesystem::path& suite_path) {
  auto doc = nlohmann::json::parse(detail::read_bytes(suite_path.string()));
  detail::check_schema(doc, "suite");
  std::vector<TaskBundle> out;
  for (const auto& t : detail::field(doc, "tasks", "suite"))
    out.push_back(load_task_bundle(suite_path.parent_path() / t.get<std::string>()));
  return out;
}

inline std::uint64_t trial_seed(std::uint64_t base_seed, const std::string& task, int trial) {
  return mix_seed(mix_seed(base_seed, tag_of(task)), static_cast<std::uint64_t>(trial));
}

/// Everything about one randomized trial that does not involve the oracle.
struct TrialWorld {
  std::string task_name;
  std::string scene_name;
  int trial = 0;
  std::uint64_t seed = 0;
  TaskSpec task;
  TrialSetup setup;
  SceneSpec scene;  // perturbed
  OccupancyGrid occupancy;
  FreeSet free;
  Pose2D start;
  CameraModel camera;
  Capture capture;
  GroundTruth truth;
  SuccessModel success;
  bool direction_constrained = false;
  std::optional<std::string> grounding_error;
  AffordanceContext context;  // footprint, centroid, directions
  std::vector<KeypointProposal> proposals;
  bool clusters_reduced = false;
};

struct PerceptionConfig {
  int clusters = kDefaultClusters;
  double prune_distance = kPruneDistance;
  double arrow_length = kArrowLength;
  FeatureSynthesis features;
};

inline TrialWorld build_trial_world(const TaskBundle& bundle, int trial, std::uint64_t seed,
                                    const PerceptionConfig& pc = {}, double clearance = kDefaultClearance) {
  TrialWorld w;
  w.task_name = bundle.task.name;
  w.scene_name = bundle.scene.name;
  w.trial = trial;
  w.seed = seed;
  w.task = bundle.task;
  w.setup = randomize_trial(bundle.scene, bundle.task, seed, clearance);
  w.scene = apply_trial(bundle.scene, w.setup);
  w.occupancy = w.scene.occupancy();
  w.free = compute_free_set(w.occupancy, clearance);
  w.start = w.setup.robot_start;
  w.camera = w.scene.camera_at(w.start);

  const SceneObject& target = w.scene.object(w.task.object_id);
  w.direction_constrained = target.direction_constrained;
  w.truth.center = target.box.center.head<2>();
  w.truth.keypoint = target.gt_keypoint ? Vec2(target.gt_keypoint->head<2>()) : w.truth.center;
  w.truth.direction = target.gt_direction.value_or(bearing(w.start.position() - w.truth.center));
  w.truth.half_angle = w.direction_constrained ? w.task.approach_half_angle : std::numbers::pi;
  w.success = {w.task.preferred_radius, w.task.reach_tolerance, w.direction_constrained, clearance};

  w.capture = synthetic_capture(w.scene, w.camera, w.task.object_id);
  w.context.frame = w.occupancy.frame();
  w.context.footprint = backproject_mask(w.capture.depth, w.capture.mask, w.camera, w.occupancy.frame());
  if (w.context.footprint.empty()) {
    w.grounding_error = "target not visible from the start pose";
    return w;
  }
  w.context.centroid = compute_centroid(w.context.footprint, w.occupancy.frame());
  w.context.directions = generate_directions(w.context.centroid, w.free, pc.arrow_length, w.start.theta);

  FeatureGrid features = synthesize_features(target, w.capture, w.camera, pc.features);
  Clustering clusters = cluster_features(features, pc.clusters, mix_seed(seed, tag_of("clusters")));
  w.clusters_reduced = clusters.k_reduced;
  w.proposals = propose_keypoints(clusters, features, w.capture.depth, w.camera, pc.prune_distance);
  return w;
}

// ---------------------------------------------------------------------------
// Running one method

using OracleFactory = std::function<std::unique_ptr<Oracle>(const TrialWorld&, Method, std::uint64_t seed)>;

struct RunOptions {
  ScriptedOracleConfig oracle{0.05};
  PlannerConfig planner;
  RrtConfig rrt;
  PivotConfig pivot;
  PerceptionConfig perception;
  ProjectionMode projection = ProjectionMode::Full;
  std::string label_suffix;  // distinguishes ablation variants in reports
  OracleFactory oracle_factory;  // remote oracle; scripted when empty
  unsigned threads = 0;          // 0 = hardware concurrency
};

inline nlohmann::json options_json(const RunOptions& o) {
  return {{"oracle",
           {{"noise_epsilon", o.oracle.noise_epsilon},
            {"fan_bonus", o.oracle.fan_bonus},
            {"distance_penalty", o.oracle.distance_penalty},
            {"missing_arrows_noise", o.oracle.missing_arrows_noise},
            {"missing_selected_noise", o.oracle.missing_selected_noise},
            {"missing_map_noise", o.oracle.missing_map_noise},
            {"kind", o.oracle_factory ? "remote" : "scripted"}}},
          {"planner", to_json(o.planner)},
          {"rrt", to_json(o.rrt)},
          {"pivot", to_json(o.pivot)},
          {"perception",
           {{"clusters", o.perception.clusters},
            {"prune_distance", o.perception.prune_distance},
            {"arrow_length", o.perception.arrow_length}}},
          {"projection", to_string(o.projection)}};
}

inline std::string method_label(Method m, const RunOptions& o) { return to_string(m) + o.label_suffix; }

namespace detail {

inline std::unique_ptr<Oracle> make_oracle(const TrialWorld& w, Method m, const RunOptions& o) {
  const std::uint64_t seed = mix_seed(w.seed, tag_of(to_string(m)));
  if (o.oracle_factory) return o.oracle_factory(w, m, seed);
  ScriptedOracleConfig cfg = o.oracle;
  cfg.seed = seed;
  return std::make_unique<ScriptedOracle>(w.truth, cfg);
}

inline void record_abort(PlanTrace& tr, const Abort& a) {
  tr.abort = a;
  tr.placement.reset();
}

inline void record_plan(PlanTrace& tr, const Outcome<PlacementPlan>& r) {
  if (const auto* a = std::get_if<Abort>(&r)) {
    record_abort(tr, *a);
    return;
  }
  const auto& p = std::get<PlacementPlan>(r);
  tr.placement = p.placement;
  tr.extra["plan"] = p.details;
  tr.extra["path_length"] = p.path_length;
}

}  // namespace detail

/// Runs `method` on a prepared trial and scores the outcome.
inline PlanTrace run_method(const TrialWorld& w, Method method, const RunOptions& opt) {
  PlanTrace tr;
  tr.method = method_label(method, opt);
  tr.seed = w.seed;
  tr.scene = w.scene_name;
  tr.task = w.task_name;
  tr.trial = w.trial;
  tr.config = options_json(opt);
  tr.config["method"] = to_string(method);
  tr.extra["direction_constrained"] = w.direction_constrained;
  tr.extra["start"] = {w.start.x, w.start.y, w.start.theta};
  tr.extra["ground_truth"] = {{"keypoint", detail::vec_json(w.truth.keypoint)},
                              {"direction", w.truth.direction},
                              {"center", detail::vec_json(w.truth.center)},
                              {"half_angle", w.truth.half_angle}};

  auto finish = [&]() {
    tr.evaluation = tr.placement ? evaluate_success(*tr.placement, w.truth, w.free, w.success)
                                 : TrialEvaluation{false, "skipped"};
    return tr;
  };

  if (w.grounding_error) {
    detail::record_abort(tr, {AbortReason::GroundingFailure, *w.grounding_error});
    return finish();
  }

  AffordanceContext ctx = w.context;
  AffordanceTrace at;
  at.centroid = ctx.centroid;
  at.footprint_cells = ctx.footprint.size();
  at.clusters_reduced = w.clusters_reduced;
  for (const auto& p : w.proposals) at.proposals.push_back(p.point3d);

  std::unique_ptr<Oracle> oracle = detail::make_oracle(w, method, opt);
  Pcg32 rng = stream_for(w.seed, "method:" + to_string(method));
  const std::string& instruction = w.task.sub_instruction;
  const bool images = oracle->wants_images();
  const OccupancyGrid& map = w.occupancy;

  auto needs_keypoint = [&]() -> std::optional<Abort> {
    std::vector<Attachment> att;
    if (images) att.push_back({"camera_view", render_camera_view(w.capture, w.camera)});
    auto g = select_affordance_point(w.proposals, instruction, *oracle, std::move(att));
    if (auto* a = std::get_if<Abort>(&g)) return *a;
    ctx.keypoint = std::get<Vec2>(g);
    at.keypoint = ctx.keypoint;
    return std::nullopt;
  };
  auto wrap_up = [&]() {
    tr.affordance = at;
    tr.oracle_log = oracle->log();
    return finish();
  };

  switch (method) {
    case Method::Ours: {
      const RenderLayers layers = layers_for(opt.projection);
      if (layers.selected) {
        std::vector<Attachment> att;
        if (images) {
          RenderLayers dl;
          dl.selected = dl.fan = dl.candidates = false;
          att.push_back({"obstacle_map_plus", render_obstacle_map_plus(make_obstacle_map_plus(map, ctx, w.start, {}, dl))});
          att.push_back({"affordance_view", render_obstacle_map_plus(make_affordance_view(map, ctx, w.start, dl))});
        }
        DirectionVote vote = select_direction(ctx, *oracle, instruction, std::move(att));
        at.votes.assign(vote.votes.begin(), vote.votes.end());
        at.selected = vote.selected;
        if (!vote.selected) {
          detail::record_abort(tr, {AbortReason::NoDirectionMajority, "direction votes without strict majority"});
          return wrap_up();
        }
        ctx.selected = vote.selected;
        ctx.fan = build_fan(ctx.centroid, ctx.arrow(*ctx.selected).unit, map.frame(), ctx.fan_half_angle);
      }
      if (auto a = needs_keypoint()) {
        detail::record_abort(tr, *a);
        return wrap_up();
      }
      RankingView view;
      view.cues = cues_for(opt.projection);
      if (images)
        view.attachments = [&](const std::vector<IndexedPoint>& markers) {
          return std::vector<Attachment>{
              {"obstacle_map_plus", render_obstacle_map_plus(make_obstacle_map_plus(map, ctx, w.start, markers, layers))},
              {"affordance_view", render_obstacle_map_plus(make_affordance_view(map, ctx, w.start, layers))}};
        };
      OptimizeResult r = optimize(ctx, w.free, instruction, *oracle, opt.planner, rng, view);
      tr.iterations = std::move(r.iterations);
      tr.placement = r.placement;
      if (r.abort) detail::record_abort(tr, *r.abort);
      return wrap_up();
    }
    case Method::ObjectCenterAStar:
    case Method::ObjectCenterRrtStar: {
      auto planner = method == Method::ObjectCenterAStar ? PathPlanner::AStar : PathPlanner::RrtStar;
      detail::record_plan(tr, place_object_center(ctx, w.start, w.free, planner, rng, w.task.preferred_radius, opt.rrt));
      return wrap_up();
    }
    case Method::AffordancePointAStar:
    case Method::AffordancePointRrtStar: {
      if (auto a = needs_keypoint()) {
        detail::record_abort(tr, *a);
        return wrap_up();
      }
      auto planner = method == Method::AffordancePointAStar ? PathPlanner::AStar : PathPlanner::RrtStar;
      detail::record_plan(tr,
                          place_affordance_point(ctx, w.start, w.free, planner, rng, w.task.preferred_radius, opt.rrt));
      return wrap_up();
    }
    case Method::PivotRgb:
    case Method::PivotMultimodal: {
      const bool rgb = method == Method::PivotRgb;
      // The camera-only variant sees no map; the multimodal one sees the map
      // and arrows but has no voted approach direction.
      Cues cues = rgb ? Cues{false, false, false} : Cues{true, true, false};
      RenderLayers layers;
      layers.selected = layers.fan = false;
      std::function<std::vector<Attachment>(const std::vector<IndexedPoint>&)> view;
      if (images) {
        if (rgb)
          view = [&](const std::vector<IndexedPoint>& markers) {
            return std::vector<Attachment>{{"camera_view", render_camera_view(w.capture, w.camera, markers)}};
          };
        else
          view = [&](const std::vector<IndexedPoint>& markers) {
            return std::vector<Attachment>{
                {"camera_view", render_camera_view(w.capture, w.camera, markers)},
                {"obstacle_map_plus",
                 render_obstacle_map_plus(make_obstacle_map_plus(map, ctx, w.start, markers, layers))}};
          };
      }
      PivotResult r =
          pivot_place(w.start.position(), ctx.centroid, w.free, instruction, *oracle, rng, opt.pivot, cues, view);
      nlohmann::json its = nlohmann::json::array();
      for (const auto& it : r.iterations) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : it.candidates) cands.push_back(detail::vec_json(c));
        const auto& cov = it.state.covariance;
        its.push_back({{"iteration", it.state.iteration},
                       {"mean", detail::vec_json(it.state.mean)},
                       {"covariance", {cov(0, 0), cov(0, 1), cov(1, 1)}},
                       {"candidates", cands},
                       {"reply", it.reply}});
      }
      tr.extra["pivot"] = its;
      tr.placement = r.placement;
      if (r.abort) detail::record_abort(tr, *r.abort);
      return wrap_up();
    }
  }
  return wrap_up();
}

// ---------------------------------------------------------------------------
// Reports

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string out;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

/// Mean squared deviation of the last iteration's marked candidates from the
/// preferred radius around the keypoint.  Nullopt when the trace has none.
inline std::optional<double> final_candidate_spread(const PlanTrace& tr) {
  if (tr.iterations.empty() || !tr.affordance || !tr.affordance->keypoint) return std::nullopt;
  const auto& it = tr.iterations.back();
  if (it.resampled.empty()) return std::nullopt;
  const double r_star = tr.config.at("planner").at("r_star").get<double>();
  double sum = 0.0;
  for (int i : it.resampled) {
    const double d = (it.positions[static_cast<std::size_t>(i)] - *tr.affordance->keypoint).norm() - r_star;
    sum += d * d;
  }
  return sum / static_cast<double>(it.resampled.size());
}

struct TaskCell {
  int successes = 0;
  int trials = 0;
  int skipped = 0;
  std::map<std::string, int> reasons;  // failures only
  double spread_sum = 0.0;
  int spread_count = 0;

  void add(const TaskCell& o) {
    successes += o.successes;
    trials += o.trials;
    skipped += o.skipped;
    for (const auto& [k, v] : o.reasons) reasons[k] += v;
    spread_sum += o.spread_sum;
    spread_count += o.spread_count;
  }
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
  std::optional<double> spread() const {
    if (!spread_count) return std::nullopt;
    return spread_sum / spread_count;
  }
};

struct ReportRow {
  std::string label;
  std::vector<TaskCell> cells;  // parallel to EvalReport::tasks
};

struct EvalReport {
  std::vector<std::string> tasks;
  std::vector<bool> constrained;  // parallel to tasks
  std::vector<ReportRow> rows;

  const ReportRow* row(const std::string& label) const {
    for (const auto& r : rows)
      if (r.label == label) return &r;
    return nullptr;
  }
  TaskCell total(const ReportRow& r) const {
    TaskCell t;
    for (const auto& c : r.cells) t.add(c);
    return t;
  }
  TaskCell constrained_total(const ReportRow& r) const {
    TaskCell t;
    for (std::size_t i = 0; i < r.cells.size(); ++i)
      if (constrained[i]) t.add(r.cells[i]);
    return t;
  }
};

/// Aggregation over stored traces; row and column order follow first
/// appearance.
inline EvalReport report_from_traces(const std::vector<PlanTrace>& traces) {
  EvalReport rep;
  auto task_index = [&](const PlanTrace& tr) {
    auto it = std::find(rep.tasks.begin(), rep.tasks.end(), tr.task);
    if (it != rep.tasks.end()) return static_cast<std::size_t>(it - rep.tasks.begin());
    rep.tasks.push_back(tr.task);
    rep.constrained.push_back(tr.extra.value("direction_constrained", false));
    for (auto& r : rep.rows) r.cells.emplace_back();
    return rep.tasks.size() - 1;
  };
  for (const auto& tr : traces) {
    const std::size_t ti = task_index(tr);
    auto rit = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const ReportRow& r) { return r.label == tr.method; });
    if (rit == rep.rows.end()) {
      rep.rows.push_back({tr.method, std::vector<TaskCell>(rep.tasks.size())});
      rit = rep.rows.end() - 1;
    }
    TaskCell& c = rit->cells[ti];
    ++c.trials;
    if (!tr.evaluation) throw std::runtime_error("trace without evaluation");
    if (tr.evaluation->success) {
      ++c.successes;
    } else {
      ++c.reasons[tr.evaluation->reason];
      if (tr.evaluation->reason == "skipped") ++c.skipped;
    }
    if (auto s = final_candidate_spread(tr)) {
      c.spread_sum += *s;
      ++c.spread_count;
    }
  }
  return rep;
}

inline nlohmann::json to_json(const TaskCell& c) {
  nlohmann::json j = {{"successes", c.successes}, {"trials", c.trials}, {"skipped", c.skipped}, {"reasons", c.reasons}};
  if (auto s = c.spread()) j["final_candidate_spread"] = *s;
  return j;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (std::size_t i = 0; i < r.tasks.size(); ++i) cells[r.tasks[i]] = to_json(row.cells[i]);
    rows.push_back({{"label", row.label},
                    {"tasks", cells},
                    {"total", to_json(r.total(row))},
                    {"direction_constrained_total", to_json(r.constrained_total(row))}});
  }
  nlohmann::json tasks = nlohmann::json::array();
  for (std::size_t i = 0; i < r.tasks.size(); ++i)
    tasks.push_back({{"name", r.tasks[i]}, {"direction_constrained", static_cast<bool>(r.constrained[i])}});
  return {{"schema", 1}, {"tasks", tasks}, {"rows", rows}};
}

inline std::string report_hash(const EvalReport& r) { return sha256_hex(to_json(r).dump()); }

/// Aligned text table: successes/trials per task, total percentage, skips.
inline std::string to_text(const EvalReport& r) {
  std::size_t label_w = 6;
  for (const auto& row : r.rows) label_w = std::max(label_w, row.label.size());
  std::vector<std::size_t> col_w;
  for (const auto& t : r.tasks) col_w.push_back(std::max<std::size_t>(t.size(), 7));
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "method";
  for (std::size_t i = 0; i < r.tasks.size(); ++i) os << "  " << std::setw(static_cast<int>(col_w[i])) << r.tasks[i];
  os << "  " << std::setw(7) << "total" << "  skipped\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(static_cast<int>(label_w)) << row.label;
    for (std::size_t i = 0; i < r.tasks.size(); ++i) {
      const auto& c = row.cells[i];
      os << "  " << std::setw(static_cast<int>(col_w[i]))
         << (std::to_string(c.successes) + "/" + std::to_string(c.trials));
    }
    const TaskCell t = r.total(row);
    char pct[16];
    std::snprintf(pct, sizeof pct, "%.0f%%", 100.0 * t.rate());
    os << "  " << std::setw(7) << pct << "  " << t.skipped << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteResult {
  EvalReport report;
  std::vector<PlanTrace> traces;  // task-major, then trial, then method
};

/// Calls `job(i)` for i in [0, count) on a small pool; results must be written
/// to per-index slots by the job so output order never depends on scheduling.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            job(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

inline SuiteResult run_suite(const std::vector<TaskBundle>& tasks, const std::vector<Method>& methods, int trials,
                             std::uint64_t base_seed, const RunOptions& opt = {}) {
  if (trials < 0) throw std::invalid_argument("trials must be non-negative");
  const std::size_t per_trial = methods.size();
  const std::size_t jobs = tasks.size() * static_cast<std::size_t>(trials);
  std::vector<PlanTrace> traces(jobs * per_trial);
  parallel_for(jobs, opt.threads, [&](std::size_t j) {
    const auto& bundle = tasks[j / static_cast<std::size_t>(trials)];
    const int trial = static_cast<int>(j % static_cast<std::size_t>(trials));
    const std::uint64_t seed = trial_seed(base_seed, bundle.task.name, trial);
    TrialWorld w = build_trial_world(bundle, trial, seed, opt.perception);
    for (std::size_t m = 0; m < per_trial; ++m) traces[j * per_trial + m] = run_method(w, methods[m], opt);
  });
  // Report rows by method, not by trial.
  std::vector<PlanTrace> ordered;
  ordered.reserve(traces.size());
  for (std::size_t m = 0; m < per_trial; ++m)
    for (std::size_t j = 0; j < jobs; ++j) ordered.push_back(traces[j * per_trial + m]);
  return {report_from_traces(ordered), std::move(ordered)};
}

/// Alpha settings compared in the ablation; nullopt is the sigmoid schedule.
inline std::vector<std::optional<double>> default_alpha_variants() { return {0.0, 0.5, 1.0, std::nullopt}; }

inline std::string alpha_label(std::optional<double> a) {
  if (!a) return "[alpha=schedule]";
  std::ostringstream os;
  os << "[alpha=" << *a << "]";
  return os.str();
}

inline SuiteResult ablate_alpha(const std::vector<TaskBundle>& tasks, int trials, std::uint64_t base_seed,
                                RunOptions opt = {},
                                const std::vector<std::optional<double>>& variants = default_alpha_variants()) {
  SuiteResult all;
  for (const auto& a : variants) {
    RunOptions o = opt;
    o.planner.alpha_mode = a ? AlphaMode::Fixed : AlphaMode::Schedule;
    o.planner.alpha_fixed = a.value_or(0.0);
    o.label_suffix = alpha_label(a);
    auto r = run_suite(tasks, {Method::Ours}, trials, base_seed, o);
    for (auto& t : r.traces) all.traces.push_back(std::move(t));
  }
  all.report = report_from_traces(all.traces);
  return all;
}

inline SuiteResult ablate_projection(const std::vector<TaskBundle>& tasks, int trials, std::uint64_t base_seed,
                                     RunOptions opt = {}) {
  SuiteResult all;
  for (auto mode : {ProjectionMode::Full, ProjectionMode::NoArrows, ProjectionMode::NoDirectionA, ProjectionMode::None}) {
    RunOptions o = opt;
    o.projection = mode;
    o.label_suffix = "[projection=" + to_string(mode) + "]";
    auto r = run_suite(tasks, {Method::Ours}, trials, base_seed, o);
    for (auto& t : r.traces) all.traces.push_back(std::move(t));
  }
  all.report = report_from_traces(all.traces);
  return all;
}

// ---------------------------------------------------------------------------
// Heatmaps

/// One raster per optimizer iteration: Gaussian kernel density of the sampled
/// candidates, weighted by their resampling probability, over a north-up view
/// of the map centered on the keypoint.
inline std::vector<Image> render_heatmap(const PlanTrace& tr, const OccupancyGrid& map, int cells = 80, int scale = 4,
                                         double bandwidth = 0.05) {
  std::vector<Image> out;
  if (!tr.affordance || !tr.affordance->keypoint) return out;
  const Vec2 g = *tr.affordance->keypoint;
  const Pose2D view(g, std::numbers::pi / 2.0);
  AffordanceContext ctx;
  ctx.frame = map.frame();
  ctx.centroid = tr.affordance->centroid;
  ctx.selected = tr.affordance->selected;
  RenderLayers layers;
  layers.arrows = layers.selected = layers.fan = layers.robot = layers.candidates = false;
  layers.footprint = false;
  const Image base = render_obstacle_map_plus(make_obstacle_map_plus(map, ctx, view, {}, layers, cells, view), scale);
  const double res = map.resolution();
  const double half = 0.5 * cells * res;
  const double px_per_m = scale / res;
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);

  for (const auto& it : tr.iterations) {
    Raster<double> density(base.width(), base.height(), 0.0);
    for (std::size_t i = 0; i < it.positions.size(); ++i) {
      const double weight = i < it.p.size() ? it.p[i] : 1.0 / static_cast<double>(it.positions.size());
      if (weight <= 0.0) continue;
      const Vec2 l = view.to_local(it.positions[i]);
      const double pc = (half - l.y()) * px_per_m, pr = (half - l.x()) * px_per_m;
      const double reach = 3.0 * bandwidth * px_per_m;
      for (int row = std::max(0, static_cast<int>(pr - reach)); row <= std::min(base.height() - 1, static_cast<int>(pr + reach)); ++row)
        for (int col = std::max(0, static_cast<int>(pc - reach)); col <= std::min(base.width() - 1, static_cast<int>(pc + reach)); ++col) {
          const double dx = (col + 0.5 - pc) / px_per_m, dy = (row + 0.5 - pr) / px_per_m;
          density.at(col, row) += weight * std::exp(-(dx * dx + dy * dy) * inv2h2);
        }
    }
    double peak = 0.0;
    for (double v : density.pixels()) peak = std::max(peak, v);
    Image img = base;
    for (int row = 0; row < img.height(); ++row)
      for (int col = 0; col < img.width(); ++col) {
        const double v = peak > 0.0 ? density.at(col, row) / peak : 0.0;
        if (v < 0.02) continue;
        // black-body ramp: red, then yellow, then white
        const auto r = static_cast<std::uint8_t>(std::lround(255.0 * std::min(1.0, 3.0 * v)));
        const auto gg = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * v - 1.0, 0.0, 1.0)));
        const auto b = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * v - 2.0, 0.0, 1.0)));
        img.at(col, row) = draw::blend(img.at(col, row), Rgb{r, gg, b}, std::min(1.0, 0.35 + 0.65 * v));
      }
    const Vec2 l = view.to_local(g);
    draw::disc(img, (half - l.y()) * px_per_m, (half - l.x()) * px_per_m, 1.5 * scale, Rgb{0, 120, 255});
    out.push_back(std::move(img));
  }
  return out;
}

/// Rebuilds the trial world a trace was produced in.
inline TrialWorld world_for_trace(const TaskBundle& bundle, const PlanTrace& tr, const PerceptionConfig& pc = {}) {
  if (tr.task != bundle.task.name) throw std::invalid_argument("trace belongs to task '" + tr.task + "'");
  return build_trial_world(bundle, tr.trial, tr.seed, pc);
}

}  // namespace baseplace
