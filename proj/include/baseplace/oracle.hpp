#pragma once

// The semantic oracle: the single point where language-conditioned judgement
// enters the planner.  Three query kinds exist (approach direction, affordance
// keypoint, candidate ranking).  ScriptedOracle answers from scene ground truth
// with configurable corruption; HttpOracle (http_oracle.hpp) forwards to a
// remote vision-language model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "baseplace/geometry.hpp"
#include "baseplace/image.hpp"
#include "baseplace/rng.hpp"

namespace baseplace {

enum class QueryKind { Direction, Keypoint, RankCandidates };

inline std::string_view to_string(QueryKind k) {
  switch (k) {
    case QueryKind::Direction: return "direction";
    case QueryKind::Keypoint: return "keypoint";
    case QueryKind::RankCandidates: return "rank_candidates";
  }
  return "?";
}

inline constexpr int kUncertain = -1;

/// One selectable answer.  `point` is the world position of a keypoint or
/// candidate (or the arrow tip for directions); `bearing` is set for
/// directions.  Remote oracles only see `index` through the rendered images.
struct OracleOption {
  int index = 0;
  Vec2 point = Vec2::Zero();
  double bearing = 0.0;
};

/// Which visual cues the attached rasters carry.  Ablations switch these off.
struct Cues {
  bool map = true;       // top-down obstacle raster present
  bool arrows = true;    // the twelve colour-coded direction arrows
  bool selected = true;  // "A" arrow plus the fan region around it

  friend bool operator==(const Cues&, const Cues&) = default;
};

struct Attachment {
  std::string name;
  Image image;
};

struct OracleQuery {
  QueryKind kind = QueryKind::Direction;
  std::string instruction;
  std::vector<Attachment> attachments;
  std::vector<OracleOption> options;
  int want = 1;
  Cues cues;
};

struct OracleReply {
  std::vector<int> indices;  // best first
  std::string raw;
  bool corrupted = false;    // scripted oracle only: the noise branch fired
};

struct OracleExchange {
  QueryKind kind = QueryKind::Direction;
  int want = 1;
  std::size_t option_count = 0;
  std::vector<int> indices;
  std::string raw;
  bool valid = true;
};

/// Structural validity: `want` distinct option indices; -1 only for
/// direction queries (as the sole answer).
inline bool reply_is_valid(const OracleQuery& q, const OracleReply& r) {
  if (q.kind == QueryKind::Direction) {
    if (r.indices.size() != 1) return false;
    if (r.indices[0] == kUncertain) return true;
  } else if (static_cast<int>(r.indices.size()) != q.want) {
    return false;
  }
  std::set<int> seen;
  for (int i : r.indices) {
    bool known = std::any_of(q.options.begin(), q.options.end(), [&](const OracleOption& o) { return o.index == i; });
    if (!known || !seen.insert(i).second) return false;
  }
  return true;
}

class Oracle {
 public:
  virtual ~Oracle() = default;

  OracleReply query(const OracleQuery& q) {
    if (q.options.empty()) throw std::invalid_argument("oracle query without options");
    if (q.want < 1 || q.want > static_cast<int>(q.options.size()))
      throw std::invalid_argument("oracle query wants more answers than options");
    OracleReply r = answer(q);
    log_.push_back({q.kind, q.want, q.options.size(), r.indices, r.raw, reply_is_valid(q, r)});
    return r;
  }

  /// Query with one retry on a structurally invalid reply.
  std::optional<OracleReply> query_validated(const OracleQuery& q) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      OracleReply r = query(q);
      if (reply_is_valid(q, r)) return r;
    }
    return std::nullopt;
  }

  /// Whether attachments are consumed; callers may skip rendering otherwise.
  virtual bool wants_images() const { return false; }
  virtual std::string name() const = 0;

  const std::vector<OracleExchange>& log() const { return log_; }
  void clear_log() { log_.clear(); }

 protected:
  virtual OracleReply answer(const OracleQuery& q) = 0;

 private:
  std::vector<OracleExchange> log_;
};

/// Strict mode of three direction answers; nullopt when there is no
/// strict majority or the majority answer is "uncertain".
inline std::optional<int> majority_vote(const std::array<int, 3>& votes) {
  for (int i = 0; i < 3; ++i) {
    int count = 0;
    for (int v : votes) count += v == votes[i] ? 1 : 0;
    if (count >= 2) return votes[i] == kUncertain ? std::nullopt : std::optional<int>(votes[i]);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

/// Ground truth the scripted oracle is allowed to see.
struct GroundTruth {
  Vec2 keypoint = Vec2::Zero();   // affordance point, planar
  double direction = 0.0;         // preferred approach bearing (from object toward robot)
  Vec2 center = Vec2::Zero();     // object center, apex of the ground-truth fan
  double half_angle = deg(60.0);

  bool in_fan(const Vec2& p) const { return within_sector(p, center, unit_at(direction), half_angle); }
};

struct ScriptedOracleConfig {
  double noise_epsilon = 0.0;
  std::uint64_t seed = 0;
  double fan_bonus = 10.0;          // meters-equivalent; dominates any distance term
  double distance_penalty = 1.0;    // per meter from the ground-truth keypoint
  // Extra ranking corruption when the attached rasters lack a cue.
  double missing_arrows_noise = 0.05;
  double missing_selected_noise = 0.25;
  double missing_map_noise = 0.45;
};

class ScriptedOracle final : public Oracle {
 public:
  ScriptedOracle(GroundTruth truth, ScriptedOracleConfig cfg)
      : truth_(truth), cfg_(cfg), rng_(stream_for(cfg.seed, "scripted-oracle")) {
    if (!(cfg.noise_epsilon >= 0.0 && cfg.noise_epsilon < 1.0))
      throw std::invalid_argument("noise_epsilon must lie in [0, 1)");
  }

  std::string name() const override { return "scripted"; }

  const GroundTruth& truth() const { return truth_; }
  const ScriptedOracleConfig& config() const { return cfg_; }

  /// Hidden ranking utility.
  double utility(const Vec2& x) const {
    return cfg_.fan_bonus * (truth_.in_fan(x) ? 1.0 : 0.0) - cfg_.distance_penalty * (x - truth_.keypoint).norm();
  }

  double ranking_noise(const Cues& c) const {
    double eps = cfg_.noise_epsilon;
    if (!c.map) eps += cfg_.missing_map_noise;
    else {
      if (!c.arrows) eps += cfg_.missing_arrows_noise;
      if (!c.selected) eps += cfg_.missing_selected_noise;
    }
    return std::min(eps, 0.95);
  }

 protected:
  OracleReply answer(const OracleQuery& q) override {
    switch (q.kind) {
      case QueryKind::Direction: return answer_direction(q);
      case QueryKind::Keypoint: return answer_keypoint(q);
      case QueryKind::RankCandidates: return answer_ranking(q);
    }
    return {};
  }

 private:
  OracleReply answer_direction(const OracleQuery& q) {
    OracleReply r;
    if (rng_.bernoulli(cfg_.noise_epsilon)) {
      // Uniform over the options plus "uncertain".
      auto pick = rng_.below(static_cast<std::uint32_t>(q.options.size() + 1));
      r.indices = {pick == q.options.size() ? kUncertain : q.options[pick].index};
      r.corrupted = true;
    } else {
      const OracleOption* best = &q.options.front();
      for (const auto& o : q.options)
        if (angle_between(o.bearing, truth_.direction) < angle_between(best->bearing, truth_.direction)) best = &o;
      r.indices = {best->index};
    }
    r.raw = "ANSWER: " + (r.indices[0] == kUncertain ? std::string("none") : std::to_string(r.indices[0]));
    return r;
  }

  OracleReply answer_keypoint(const OracleQuery& q) {
    OracleReply r;
    if (rng_.bernoulli(cfg_.noise_epsilon)) {
      r.indices = {q.options[rng_.below(static_cast<std::uint32_t>(q.options.size()))].index};
      r.corrupted = true;
    } else {
      const OracleOption* best = &q.options.front();
      for (const auto& o : q.options)
        if ((o.point - truth_.keypoint).norm() < (best->point - truth_.keypoint).norm()) best = &o;
      r.indices = {best->index};
    }
    r.raw = "ANSWER: " + std::to_string(r.indices[0]);
    return r;
  }

  OracleReply answer_ranking(const OracleQuery& q) {
    std::vector<const OracleOption*> order;
    for (const auto& o : q.options) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(),
                     [&](const OracleOption* a, const OracleOption* b) { return utility(a->point) > utility(b->point); });
    const double eps = ranking_noise(q.cues);
    OracleReply r;
    const auto n = static_cast<std::uint32_t>(order.size());
    for (std::uint32_t i = 0; i < n; ++i) {
      if (n > 1 && rng_.bernoulli(eps)) {
        std::swap(order[i], order[rng_.below(n)]);
        r.corrupted = true;
      }
    }
    r.raw = "ANSWER: ";
    for (int k = 0; k < q.want; ++k) {
      r.indices.push_back(order[k]->index);
      r.raw += (k ? ", " : "") + std::to_string(order[k]->index);
    }
    return r;
  }

  GroundTruth truth_;
  ScriptedOracleConfig cfg_;
  Pcg32 rng_;
};

}  // namespace baseplace
