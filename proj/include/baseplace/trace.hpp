#pragma once

// PlanTrace: everything a planning run decided, in a form that serializes to
// JSON and back without loss.  Reports and renderings are computed from it.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "baseplace/geometry.hpp"
#include "baseplace/oracle.hpp"
#include "baseplace/outcome.hpp"
#include "baseplace/rng.hpp"

namespace baseplace {

inline constexpr int kTraceSchema = 1;

struct IterationTrace {
  int t = 1;
  double alpha = 0.0;
  double sigma_s = 0.0;
  std::optional<Vec2> mu;       // semantic center used for scoring
  std::vector<Vec2> positions;  // accepted samples
  std::vector<double> w_geo, w_sem, w, p;
  bool uniform_fallback = false;
  std::vector<int> resampled;   // candidate index per marker (marker = position in this list)
  int want = 0;
  std::vector<int> reply;       // marker indices, best first
  std::optional<Vec2> mu_next;  // after refinement
};

struct AffordanceTrace {
  Vec2 centroid = Vec2::Zero();
  std::size_t footprint_cells = 0;
  std::vector<int> votes;
  std::optional<int> selected;
  std::vector<Vec3> proposals;
  bool clusters_reduced = false;
  std::optional<Vec2> keypoint;
};

struct TrialEvaluation {
  bool success = false;
  std::string reason;  // "ok", "collision", "distance", "direction", "skipped"
};

struct PlanTrace {
  int schema = kTraceSchema;
  std::string method;
  std::string rng = std::string(kRngName);
  std::uint64_t seed = 0;
  std::string scene;
  std::string task;
  int trial = 0;
  nlohmann::json config = nlohmann::json::object();
  std::optional<AffordanceTrace> affordance;
  std::vector<IterationTrace> iterations;
  std::optional<Pose2D> placement;
  std::optional<Abort> abort;
  std::vector<OracleExchange> oracle_log;
  nlohmann::json extra = nlohmann::json::object();
  std::optional<TrialEvaluation> evaluation;
};

namespace detail {

inline nlohmann::json vec_json(const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); }
inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
inline Vec2 json_vec2(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline Vec3 json_vec3(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}
template <typename V>
nlohmann::json opt_json(const std::optional<V>& v) {
  return v ? vec_json(*v) : nlohmann::json(nullptr);
}
inline std::optional<Vec2> json_opt_vec2(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return json_vec2(j);
}

inline QueryKind query_kind_from(const std::string& s) {
  if (s == "direction") return QueryKind::Direction;
  if (s == "keypoint") return QueryKind::Keypoint;
  if (s == "rank_candidates") return QueryKind::RankCandidates;
  throw std::runtime_error("unknown query kind '" + s + "'");
}

inline AbortReason abort_reason_from(const std::string& s) {
  for (auto r : {AbortReason::GroundingFailure, AbortReason::NoDirectionMajority, AbortReason::OracleFailure,
                 AbortReason::NoFeasibleRegion, AbortReason::PlanningFailure})
    if (to_string(r) == s) return r;
  throw std::runtime_error("unknown abort reason '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const IterationTrace& it) {
  using detail::vec_json;
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& x : it.positions) pos.push_back(vec_json(x));
  return {{"t", it.t},
          {"alpha", it.alpha},
          {"sigma_s", it.sigma_s},
          {"mu", detail::opt_json(it.mu)},
          {"positions", pos},
          {"w_geo", it.w_geo},
          {"w_sem", it.w_sem},
          {"w", it.w},
          {"p", it.p},
          {"uniform_fallback", it.uniform_fallback},
          {"resampled", it.resampled},
          {"want", it.want},
          {"reply", it.reply},
          {"mu_next", detail::opt_json(it.mu_next)}};
}

inline IterationTrace iteration_from_json(const nlohmann::json& j) {
  IterationTrace it;
  it.t = j.at("t").get<int>();
  it.alpha = j.at("alpha").get<double>();
  it.sigma_s = j.at("sigma_s").get<double>();
  it.mu = detail::json_opt_vec2(j.at("mu"));
  for (const auto& x : j.at("positions")) it.positions.push_back(detail::json_vec2(x));
  it.w_geo = j.at("w_geo").get<std::vector<double>>();
  it.w_sem = j.at("w_sem").get<std::vector<double>>();
  it.w = j.at("w").get<std::vector<double>>();
  it.p = j.at("p").get<std::vector<double>>();
  it.uniform_fallback = j.at("uniform_fallback").get<bool>();
  it.resampled = j.at("resampled").get<std::vector<int>>();
  it.want = j.at("want").get<int>();
  it.reply = j.at("reply").get<std::vector<int>>();
  it.mu_next = detail::json_opt_vec2(j.at("mu_next"));
  return it;
}

inline nlohmann::json to_json(const PlanTrace& tr) {
  using detail::vec_json;
  nlohmann::json j;
  j["schema"] = tr.schema;
  j["method"] = tr.method;
  j["rng"] = tr.rng;
  j["seed"] = tr.seed;
  j["scene"] = tr.scene;
  j["task"] = tr.task;
  j["trial"] = tr.trial;
  j["config"] = tr.config;
  if (tr.affordance) {
    const auto& a = *tr.affordance;
    nlohmann::json props = nlohmann::json::array();
    for (const auto& p : a.proposals) props.push_back(vec_json(p));
    j["affordance"] = {{"centroid", vec_json(a.centroid)},
                       {"footprint_cells", a.footprint_cells},
                       {"votes", a.votes},
                       {"selected", a.selected ? nlohmann::json(*a.selected) : nlohmann::json(nullptr)},
                       {"proposals", props},
                       {"clusters_reduced", a.clusters_reduced},
                       {"keypoint", detail::opt_json(a.keypoint)}};
  } else {
    j["affordance"] = nullptr;
  }
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : tr.iterations) its.push_back(to_json(it));
  j["iterations"] = its;
  j["placement"] = tr.placement ? nlohmann::json::array({tr.placement->x, tr.placement->y, tr.placement->theta})
                                : nlohmann::json(nullptr);
  j["abort"] = tr.abort ? nlohmann::json{{"reason", to_string(tr.abort->reason)}, {"detail", tr.abort->detail}}
                        : nlohmann::json(nullptr);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : tr.oracle_log)
    log.push_back({{"kind", to_string(e.kind)},
                   {"want", e.want},
                   {"options", e.option_count},
                   {"indices", e.indices},
                   {"raw", e.raw},
                   {"valid", e.valid}});
  j["oracle_log"] = log;
  j["extra"] = tr.extra;
  j["evaluation"] = tr.evaluation ? nlohmann::json{{"success", tr.evaluation->success}, {"reason", tr.evaluation->reason}}
                                  : nlohmann::json(nullptr);
  return j;
}

inline PlanTrace trace_from_json(const nlohmann::json& j) {
  PlanTrace tr;
  tr.schema = j.at("schema").get<int>();
  if (tr.schema != kTraceSchema) throw std::runtime_error("unsupported trace schema " + std::to_string(tr.schema));
  tr.method = j.at("method").get<std::string>();
  tr.rng = j.at("rng").get<std::string>();
  tr.seed = j.at("seed").get<std::uint64_t>();
  tr.scene = j.at("scene").get<std::string>();
  tr.task = j.at("task").get<std::string>();
  tr.trial = j.at("trial").get<int>();
  tr.config = j.at("config");
  if (const auto& a = j.at("affordance"); !a.is_null()) {
    AffordanceTrace at;
    at.centroid = detail::json_vec2(a.at("centroid"));
    at.footprint_cells = a.at("footprint_cells").get<std::size_t>();
    at.votes = a.at("votes").get<std::vector<int>>();
    if (!a.at("selected").is_null()) at.selected = a.at("selected").get<int>();
    for (const auto& p : a.at("proposals")) at.proposals.push_back(detail::json_vec3(p));
    at.clusters_reduced = a.at("clusters_reduced").get<bool>();
    at.keypoint = detail::json_opt_vec2(a.at("keypoint"));
    tr.affordance = at;
  }
  for (const auto& it : j.at("iterations")) tr.iterations.push_back(iteration_from_json(it));
  if (const auto& p = j.at("placement"); !p.is_null())
    tr.placement = Pose2D(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  if (const auto& a = j.at("abort"); !a.is_null())
    tr.abort = Abort{detail::abort_reason_from(a.at("reason").get<std::string>()), a.at("detail").get<std::string>()};
  for (const auto& e : j.at("oracle_log"))
    tr.oracle_log.push_back({detail::query_kind_from(e.at("kind").get<std::string>()), e.at("want").get<int>(),
                             e.at("options").get<std::size_t>(), e.at("indices").get<std::vector<int>>(),
                             e.at("raw").get<std::string>(), e.at("valid").get<bool>()});
  tr.extra = j.at("extra");
  if (const auto& ev = j.at("evaluation"); !ev.is_null())
    tr.evaluation = TrialEvaluation{ev.at("success").get<bool>(), ev.at("reason").get<std::string>()};
  return tr;
}

inline std::string serialize(const PlanTrace& tr) { return to_json(tr).dump(1) + "\n"; }

}  // namespace baseplace
