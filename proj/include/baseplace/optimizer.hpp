#pragma once

// Coarse-to-fine base placement search.  Each iteration samples around the
// affordance point, weights samples by a geometric term (distance from the
// point close to the preferred radius) and a semantic term (closeness to the
// oracle's previous picks), resamples a small marked set, and asks the oracle
// to rank it.  The last ranking is reduced to one placement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "baseplace/geometry.hpp"
#include "baseplace/gridmap.hpp"
#include "baseplace/oracle.hpp"
#include "baseplace/outcome.hpp"
#include "baseplace/projection.hpp"
#include "baseplace/rng.hpp"
#include "baseplace/trace.hpp"

namespace baseplace {

enum class AlphaMode { Schedule, Fixed };

struct PlannerConfig {
  int n = 1000;          // accepted samples per iteration
  int n_sample = 20;     // marked candidates shown to the oracle
  int iterations = 4;
  double r_max = 1.2;
  double r_star = 0.7;
  double sigma_sample = 1.0;
  double sigma_g = 0.1;
  double sigma_s_base = 0.2;
  double sigma_s_decay = 0.8;
  double alpha_max = 0.6;
  double gamma = 2.0;
  double delta = 0.05;
  int top_k = 3;
  int final_top = 5;
  int final_drop = 2;
  AlphaMode alpha_mode = AlphaMode::Schedule;
  double alpha_fixed = 0.0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(n, "n");
    positive(n_sample, "n_sample");
    positive(iterations, "iterations");
    positive(r_max, "r_max");
    positive(r_star, "r_star");
    positive(sigma_sample, "sigma_sample");
    positive(sigma_g, "sigma_g");
    positive(sigma_s_base, "sigma_s_base");
    positive(sigma_s_decay, "sigma_s_decay");
    positive(gamma, "gamma");
    positive(delta, "delta");
    positive(top_k, "top_k");
    if (n < n_sample) throw std::invalid_argument("n must be at least n_sample");
    if (alpha_max < 0.0 || alpha_max > 1.0) throw std::invalid_argument("alpha_max must lie in [0, 1]");
    if (alpha_fixed < 0.0 || alpha_fixed > 1.0) throw std::invalid_argument("alpha_fixed must lie in [0, 1]");
    if (top_k > n_sample || final_top > n_sample) throw std::invalid_argument("ranking size exceeds n_sample");
    if (final_drop < 0 || final_drop >= final_top) throw std::invalid_argument("final_drop must be below final_top");
  }
};

inline nlohmann::json to_json(const PlannerConfig& c) {
  return {{"n", c.n},
          {"n_sample", c.n_sample},
          {"iterations", c.iterations},
          {"r_max", c.r_max},
          {"r_star", c.r_star},
          {"sigma_sample", c.sigma_sample},
          {"sigma_g", c.sigma_g},
          {"sigma_s_base", c.sigma_s_base},
          {"sigma_s_decay", c.sigma_s_decay},
          {"alpha_max", c.alpha_max},
          {"gamma", c.gamma},
          {"delta", c.delta},
          {"top_k", c.top_k},
          {"final_top", c.final_top},
          {"final_drop", c.final_drop},
          {"alpha_mode", c.alpha_mode == AlphaMode::Schedule ? "schedule" : "fixed"},
          {"alpha_fixed", c.alpha_fixed}};
}

inline constexpr double kMinSigmaS = 1e-4;

/// Gaussian probability mass of N(mu, sigma^2) inside [d - delta, d + delta].
inline double window_mass(double d, double mu, double sigma, double delta) {
  if (!(sigma > 0.0) || delta < 0.0) throw std::invalid_argument("window_mass: sigma > 0 and delta >= 0 required");
  const double s = sigma * std::numbers::sqrt2;
  const double lo = (d - delta - mu) / s, hi = (d + delta - mu) / s;
  // Difference of the tail on the window's far side from the mean, so the
  // subtraction never cancels two values close to 1.
  if (lo > 0.0) return 0.5 * (std::erfc(lo) - std::erfc(hi));
  return 0.5 * (std::erfc(-hi) - std::erfc(-lo));
}

/// Sigmoid ramp from near 0 to alpha_max, midpoint at iterations / 2.
inline double alpha_schedule(double t, const PlannerConfig& c) {
  return c.alpha_max / (1.0 + std::exp(-c.gamma * (t - c.iterations / 2.0)));
}

inline double alpha_at(int t, const PlannerConfig& c) {
  return c.alpha_mode == AlphaMode::Fixed ? c.alpha_fixed : alpha_schedule(t, c);
}

struct OptimizerState {
  int t = 0;  // completed refinements
  std::optional<Vec2> mu;
  double sigma_s = 0.2;

  static OptimizerState initial(const PlannerConfig& c) { return {0, std::nullopt, std::max(c.sigma_s_base, kMinSigmaS)}; }
};

struct Scores {
  double w_geo = 0.0, w_sem = 0.0, w = 0.0;
};

inline Scores score_candidate(const Vec2& x, const Vec2& g, const OptimizerState& s, const PlannerConfig& c,
                              double alpha) {
  Scores out;
  out.w_geo = window_mass((x - g).norm(), c.r_star, c.sigma_g, c.delta);
  out.w_sem = s.mu ? window_mass((x - *s.mu).norm(), 0.0, s.sigma_s, c.delta) : 1.0;
  out.w = std::pow(out.w_geo, alpha) * std::pow(out.w_sem, 1.0 - alpha);
  return out;
}

/// Exactly `count` draws from N(g, sigma_sample^2 I) that lie within r_max of
/// g and inside the free set.  Gives up once at least 100 * count attempts
/// have been made and fewer than one in a thousand was accepted.
inline Outcome<std::vector<Vec2>> draw_candidates(const Vec2& g, const FreeSet& free, const PlannerConfig& c,
                                                  Pcg32& rng, int count = -1) {
  if (count < 0) count = c.n;
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(count));
  const long long budget = 100LL * count;
  long long attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    ++attempts;
    Vec2 x(rng.normal(g.x(), c.sigma_sample), rng.normal(g.y(), c.sigma_sample));
    if ((x - g).norm() <= c.r_max && free.contains(x)) out.push_back(x);
    if (attempts >= budget && static_cast<double>(out.size()) < 1e-3 * static_cast<double>(attempts))
      return Abort{AbortReason::NoFeasibleRegion,
                   "accepted " + std::to_string(out.size()) + " of " + std::to_string(attempts) + " draws"};
  }
  return out;
}

struct Resampling {
  std::vector<double> p;     // normalized weights
  std::vector<int> picks;    // candidate index for each marker 0..count-1
  bool uniform_fallback = false;
};

/// i.i.d. draws proportional to `weights`; uniform if every weight is zero.
inline Resampling resample_weighted(const std::vector<double>& weights, int count, Pcg32& rng) {
  if (weights.empty()) throw std::invalid_argument("resample_weighted: no candidates");
  Resampling r;
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("resample_weighted: weights must be finite and >= 0");
    total += w;
  }
  const std::size_t n = weights.size();
  r.p.resize(n);
  if (total > 0.0) {
    for (std::size_t i = 0; i < n; ++i) r.p[i] = weights[i] / total;
  } else {
    r.uniform_fallback = true;
    std::fill(r.p.begin(), r.p.end(), 1.0 / static_cast<double>(n));
  }
  std::vector<double> cdf(n);
  std::partial_sum(r.p.begin(), r.p.end(), cdf.begin());
  for (int k = 0; k < count; ++k) {
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    auto idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(n - 1)));
    while (r.p[idx] == 0.0 && idx > 0) --idx;  // u landed on a flat step
    r.picks.push_back(static_cast<int>(idx));
  }
  return r;
}

/// Semantic center becomes the mean of the oracle's picks; the semantic
/// bandwidth shrinks by one decay step.
inline OptimizerState refine_step(const std::vector<Vec2>& ranked, OptimizerState s, const PlannerConfig& c) {
  if (ranked.empty()) throw std::invalid_argument("refine_step: no ranked positions");
  Vec2 sum = Vec2::Zero();
  for (const auto& x : ranked) sum += x;
  s.mu = sum / static_cast<double>(ranked.size());
  ++s.t;
  s.sigma_s = std::max(c.sigma_s_base * std::pow(c.sigma_s_decay, s.t), kMinSigmaS);
  return s;
}

/// Mean of the ranked positions after dropping the `drop` farthest from their
/// joint mean.  Equal distances drop the worse-ranked position first.
inline Vec2 finalize(const std::vector<Vec2>& ranked, int drop = 2) {
  if (ranked.empty() || drop < 0 || drop >= static_cast<int>(ranked.size()))
    throw std::invalid_argument("finalize: need more positions than dropped ones");
  Vec2 mean = Vec2::Zero();
  for (const auto& x : ranked) mean += x;
  mean /= static_cast<double>(ranked.size());
  std::vector<int> order(ranked.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double da = (ranked[a] - mean).norm(), db = (ranked[b] - mean).norm();
    if (da != db) return da > db;
    return a > b;
  });
  Vec2 sum = Vec2::Zero();
  for (std::size_t i = static_cast<std::size_t>(drop); i < order.size(); ++i) sum += ranked[order[i]];
  return sum / static_cast<double>(order.size() - static_cast<std::size_t>(drop));
}

/// How the ranking query is dressed: which cues the rasters carry and, for
/// oracles that look at images, a callback producing them.
struct RankingView {
  Cues cues;
  std::function<std::vector<Attachment>(const std::vector<IndexedPoint>&)> attachments;
};

struct OptimizeResult {
  std::optional<Pose2D> placement;
  std::optional<Abort> abort;
  std::vector<IterationTrace> iterations;
};

inline OptimizeResult optimize(const AffordanceContext& ctx, const FreeSet& free, const std::string& instruction,
                               Oracle& oracle, const PlannerConfig& cfg, Pcg32& rng, const RankingView& view = {}) {
  cfg.validate();
  if (!ctx.keypoint) throw std::invalid_argument("optimize: affordance keypoint not set");
  const Vec2 g = *ctx.keypoint;
  OptimizeResult out;
  OptimizerState state = OptimizerState::initial(cfg);

  for (int t = 1; t <= cfg.iterations; ++t) {
    IterationTrace it;
    it.t = t;
    it.alpha = alpha_at(t, cfg);
    it.sigma_s = state.sigma_s;
    it.mu = state.mu;

    auto drawn = draw_candidates(g, free, cfg, rng);
    if (auto* a = std::get_if<Abort>(&drawn)) {
      out.abort = *a;
      out.iterations.push_back(std::move(it));
      return out;
    }
    it.positions = std::move(std::get<std::vector<Vec2>>(drawn));
    for (const auto& x : it.positions) {
      Scores s = score_candidate(x, g, state, cfg, it.alpha);
      it.w_geo.push_back(s.w_geo);
      it.w_sem.push_back(s.w_sem);
      it.w.push_back(s.w);
    }
    Resampling rs = resample_weighted(it.w, cfg.n_sample, rng);
    it.p = std::move(rs.p);
    it.uniform_fallback = rs.uniform_fallback;
    it.resampled = std::move(rs.picks);

    const bool last = t == cfg.iterations;
    OracleQuery q;
    q.kind = QueryKind::RankCandidates;
    q.instruction = instruction;
    q.want = last ? cfg.final_top : cfg.top_k;
    q.cues = view.cues;
    std::vector<IndexedPoint> markers;
    for (std::size_t m = 0; m < it.resampled.size(); ++m) {
      const Vec2& x = it.positions[static_cast<std::size_t>(it.resampled[m])];
      q.options.push_back({static_cast<int>(m), x, 0.0});
      markers.push_back({static_cast<int>(m), x});
    }
    if (view.attachments && oracle.wants_images()) q.attachments = view.attachments(markers);
    it.want = q.want;

    auto reply = oracle.query_validated(q);
    if (!reply) {
      out.abort = Abort{AbortReason::OracleFailure, "ranking reply invalid after retry"};
      out.iterations.push_back(std::move(it));
      return out;
    }
    it.reply = reply->indices;
    std::vector<Vec2> ranked;
    for (int m : it.reply) ranked.push_back(markers[static_cast<std::size_t>(m)].point);

    if (last) {
      Vec2 x = finalize(ranked, cfg.final_drop);
      out.placement = facing(x, ctx.centroid);
    } else {
      state = refine_step(ranked, state, cfg);
      it.mu_next = state.mu;
    }
    out.iterations.push_back(std::move(it));
  }
  return out;
}

}  // namespace baseplace
