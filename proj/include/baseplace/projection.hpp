#pragma once

// Affordance guidance projection: lift the target's image mask into the map
// (footprint and centroid), lay twelve candidate approach directions around
// it, vote on one with the oracle, and build the fan region around the
// winner.  Also renders the annotated top-down view ("Obstacle Map+").

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "baseplace/draw.hpp"
#include "baseplace/geometry.hpp"
#include "baseplace/gridmap.hpp"
#include "baseplace/image.hpp"
#include "baseplace/oracle.hpp"
#include "baseplace/outcome.hpp"
#include "baseplace/scene.hpp"

namespace baseplace {

inline constexpr int kDirectionCount = 12;
inline constexpr double kDirectionStep = deg(30.0);
inline constexpr double kFanHalfAngle = deg(60.0);
inline constexpr double kArrowLength = 3.0;

struct GroundingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DirectionArrow {
  int index = 1;  // 1..12
  double bearing = 0.0;
  Vec2 unit = Vec2::UnitX();
  Vec2 tip = Vec2::Zero();
  double length = 0.0;
};

using Directions = std::array<DirectionArrow, kDirectionCount>;

struct AffordanceContext {
  GridFrame frame;
  std::vector<CellIndex> footprint;  // object cells on the map
  Vec2 centroid = Vec2::Zero();
  Directions directions{};
  std::optional<int> selected;       // voted arrow index
  std::vector<CellIndex> fan;        // cells around the voted arrow
  double fan_half_angle = kFanHalfAngle;
  std::optional<Vec2> keypoint;      // planar affordance point

  const DirectionArrow& arrow(int index) const { return directions.at(static_cast<std::size_t>(index - 1)); }
  std::optional<Vec2> selected_unit() const {
    if (!selected) return std::nullopt;
    return arrow(*selected).unit;
  }
  bool in_fan(const Vec2& p) const {
    auto u = selected_unit();
    return u && within_sector(p, centroid, *u, fan_half_angle);
  }
};

/// Masked pixels with finite depth, lifted through the pinhole model and
/// dropped onto the grid.  Returns the sorted, de-duplicated cell set.
inline std::vector<CellIndex> backproject_mask(const DepthImage& depth, const Mask& mask, const CameraModel& camera,
                                               const GridFrame& frame) {
  if (depth.width() != mask.width() || depth.height() != mask.height())
    throw std::invalid_argument("depth and mask sizes differ");
  const auto& k = camera.intrinsics;
  std::vector<CellIndex> cells;
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      if (!mask.at(u, v)) continue;
      const double z = depth.at(u, v);
      if (!std::isfinite(z) || z <= 0.0) continue;
      Vec3 pc((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
      Vec3 pw = camera.camera_to_world * pc;
      if (auto c = frame.world_to_grid(pw.head<2>())) cells.push_back(*c);
    }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

/// Mean of the footprint's cell centers.
inline Vec2 compute_centroid(std::span<const CellIndex> footprint, const GridFrame& frame) {
  if (footprint.empty()) throw GroundingError("empty object footprint");
  Vec2 sum = Vec2::Zero();
  for (const auto& c : footprint) sum += frame.grid_to_world(c);
  return sum / static_cast<double>(footprint.size());
}

/// Twelve arrows 30 degrees apart, arrow 1 along `phase`.  Each arrow runs
/// from the centroid out to `arrow_length`, or to where it first leaves the
/// free set after having entered it (the object and its clearance band around
/// the centroid are crossed first).  An arrow that never reaches free space
/// has length 0.
inline Directions generate_directions(const Vec2& centroid, const FreeSet& free, double arrow_length = kArrowLength,
                                      double phase = 0.0) {
  Directions out{};
  const double step = 0.25 * free.frame().resolution;
  for (int i = 0; i < kDirectionCount; ++i) {
    DirectionArrow& a = out[static_cast<std::size_t>(i)];
    a.index = i + 1;
    a.bearing = normalize_angle(phase + i * kDirectionStep);
    a.unit = unit_at(a.bearing);
    bool entered = false;
    double length = 0.0;
    // Integer stepping so the endpoint itself is tested rather than assumed.
    const auto steps = static_cast<int>(std::ceil(arrow_length / step));
    for (int k = 0; k <= steps; ++k) {
      const double s = std::min(k * step, arrow_length);
      if (free.contains(Vec2(centroid + s * a.unit))) {
        entered = true;
        length = s;
      } else if (entered) {
        break;
      }
    }
    a.length = entered ? length : 0.0;
    a.tip = centroid + a.length * a.unit;
  }
  return out;
}

/// Grid cells whose bearing from the centroid is within `half_angle` of
/// `direction`, at any range inside `frame`.
inline std::vector<CellIndex> build_fan(const Vec2& centroid, const Vec2& direction, const GridFrame& frame,
                                        double half_angle = kFanHalfAngle) {
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw std::invalid_argument("fan direction must be a unit vector");
  std::vector<CellIndex> cells;
  for (int iy = 0; iy < frame.height; ++iy)
    for (int ix = 0; ix < frame.width; ++ix)
      if (within_sector(frame.grid_to_world({ix, iy}), centroid, direction, half_angle)) cells.push_back({ix, iy});
  return cells;
}

inline std::vector<OracleOption> direction_options(const Directions& dirs) {
  std::vector<OracleOption> opts;
  for (const auto& a : dirs) opts.push_back({a.index, a.tip, a.bearing});
  return opts;
}

struct DirectionVote {
  std::array<int, 3> votes{};
  std::optional<int> selected;
};

/// Asks the oracle three times and takes the strict majority.  A reply that
/// fails validation counts as "uncertain".
inline DirectionVote select_direction(const AffordanceContext& ctx, Oracle& oracle, const std::string& instruction,
                                      std::vector<Attachment> attachments = {}) {
  OracleQuery q;
  q.kind = QueryKind::Direction;
  q.instruction = instruction;
  q.attachments = std::move(attachments);
  q.options = direction_options(ctx.directions);
  q.want = 1;
  DirectionVote vote;
  for (int& v : vote.votes) {
    OracleReply r = oracle.query(q);
    v = reply_is_valid(q, r) ? r.indices.front() : kUncertain;
  }
  vote.selected = majority_vote(vote.votes);
  return vote;
}

// ---------------------------------------------------------------------------
// Rendering

/// Arrow colours; entry i-1 belongs to direction i in every rendering.
inline const std::array<Rgb, kDirectionCount>& direction_palette() {
  static constexpr std::array<Rgb, kDirectionCount> kPalette = {{
      {230, 25, 25},    // 1 red
      {25, 60, 230},    // 2 blue
      {20, 150, 40},    // 3 green
      {220, 0, 220},    // 4 magenta
      {0, 190, 200},    // 5 cyan
      {245, 130, 20},   // 6 orange
      {120, 40, 200},   // 7 purple
      {140, 80, 20},    // 8 brown
      {250, 110, 180},  // 9 pink
      {130, 130, 0},    // 10 olive
      {0, 0, 120},      // 11 navy
      {0, 120, 120},    // 12 teal
  }};
  return kPalette;
}

namespace palette {
inline constexpr Rgb kFree{255, 255, 255};
inline constexpr Rgb kOccupied{0, 0, 0};
inline constexpr Rgb kUnknown{150, 150, 150};
inline constexpr Rgb kFootprint{60, 200, 60};
inline constexpr Rgb kFanTint{255, 165, 60};
inline constexpr Rgb kRobot{20, 20, 160};
inline constexpr Rgb kCandidate{200, 0, 90};
inline constexpr Rgb kLabel{0, 0, 0};
}  // namespace palette

struct RenderLayers {
  bool footprint = true;
  bool fan = true;
  bool arrows = true;    // all twelve
  bool selected = true;  // "A" on the chosen arrow (drawn even if `arrows` is off)
  bool robot = true;
  bool candidates = true;

  Cues cues() const { return {true, arrows, selected && fan}; }
};

struct IndexedPoint {
  int index = 0;
  Vec2 point = Vec2::Zero();
};

/// Everything needed to draw the annotated top-down view.  The view frame is
/// robot-aligned: the robot's heading points up in the image.
struct ObstacleMapPlus {
  OccupancyGrid base;  // egocentric crop of the global map
  Pose2D view;
  RenderLayers layers;
  GridFrame global_frame;
  std::vector<std::uint8_t> footprint_mask;  // over global_frame
  Vec2 centroid = Vec2::Zero();
  Directions directions{};
  std::optional<int> selected;
  double fan_half_angle = kFanHalfAngle;
  Pose2D robot;
  std::vector<IndexedPoint> candidates;
};

inline ObstacleMapPlus make_obstacle_map_plus(const OccupancyGrid& global, const AffordanceContext& ctx,
                                              const Pose2D& robot, std::vector<IndexedPoint> candidates = {},
                                              RenderLayers layers = {}, int cells = 120,
                                              std::optional<Pose2D> view = std::nullopt) {
  ObstacleMapPlus m;
  m.view = view.value_or(robot);
  m.base = extract_local_egocentric(global, m.view, cells);
  m.layers = layers;
  m.global_frame = global.frame();
  m.footprint_mask.assign(global.frame().size(), 0);
  for (const auto& c : ctx.footprint)
    if (global.frame().contains(c)) m.footprint_mask[global.frame().linear(c)] = 1;
  m.centroid = ctx.centroid;
  m.directions = ctx.directions;
  m.selected = ctx.selected;
  m.fan_half_angle = ctx.fan_half_angle;
  m.robot = robot;
  m.candidates = std::move(candidates);
  return m;
}

/// Second raster standing in for the annotated camera view: a close-up of the
/// object with footprint, arrows and the "A" label, no candidates.
inline ObstacleMapPlus make_affordance_view(const OccupancyGrid& global, const AffordanceContext& ctx,
                                            const Pose2D& robot, RenderLayers layers = {}) {
  layers.candidates = false;
  layers.fan = false;
  return make_obstacle_map_plus(global, ctx, robot, {}, layers, 80, Pose2D(ctx.centroid, robot.theta));
}

namespace detail {

struct ViewMapping {
  Pose2D view;
  double half;  // meters
  double px_per_m;

  Vec2 to_pixel(const Vec2& world) const {
    Vec2 l = view.to_local(world);
    return {(half - l.y()) * px_per_m, (half - l.x()) * px_per_m};
  }
  Vec2 to_world(double col, double row) const {
    return view.to_world({half - row / px_per_m, half - col / px_per_m});
  }
};

}  // namespace detail

inline Image render_obstacle_map_plus(const ObstacleMapPlus& m, int scale = 4) {
  const int cells = m.base.width();
  const double res = m.base.resolution();
  const int size = cells * scale;
  const detail::ViewMapping map{m.view, 0.5 * cells * res, scale / res};
  Image img(size, size);

  std::optional<Vec2> fan_dir;
  if (m.layers.fan && m.selected) fan_dir = m.directions.at(static_cast<std::size_t>(*m.selected - 1)).unit;

  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) {
      Vec2 w = map.to_world(col + 0.5, row + 0.5);
      Vec2 local = m.view.to_local(w);
      CellState s = m.base.at_world(local);
      Rgb c = s == CellState::Free ? palette::kFree : s == CellState::Occupied ? palette::kOccupied : palette::kUnknown;
      if (fan_dir && s != CellState::Occupied && within_sector(w, m.centroid, *fan_dir, m.fan_half_angle))
        c = draw::blend(c, palette::kFanTint, 0.45);
      if (m.layers.footprint) {
        if (auto g = m.global_frame.world_to_grid(w); g && m.footprint_mask[m.global_frame.linear(*g)])
          c = palette::kFootprint;
      }
      img.at(col, row) = c;
    }

  const auto& pal = direction_palette();
  const double half_width = std::max(1.0, 0.3 * scale);
  const int glyph_scale = std::max(1, scale / 2);
  Vec2 c0 = map.to_pixel(m.centroid);
  for (const auto& a : m.directions) {
    bool is_selected = m.selected && *m.selected == a.index;
    if (!m.layers.arrows && !(m.layers.selected && is_selected)) continue;
    Vec2 tip = map.to_pixel(a.tip);
    Rgb color = pal[static_cast<std::size_t>(a.index - 1)];
    draw::line(img, c0.x(), c0.y(), tip.x(), tip.y(), half_width, color);
    draw::disc(img, tip.x(), tip.y(), 2.0 * half_width, color);
    Vec2 dir = tip - c0;
    Vec2 along = dir.norm() > 0 ? Vec2(dir / dir.norm()) : Vec2(0, -1);
    Vec2 label = tip + along * (7.0 * glyph_scale);
    if (m.layers.arrows) draw::text(img, label.x(), label.y(), std::to_string(a.index), glyph_scale, color);
    if (m.layers.selected && is_selected) {
      Vec2 a_pos = tip + along * (15.0 * glyph_scale);
      draw::text(img, a_pos.x(), a_pos.y(), "A", glyph_scale + 1, palette::kLabel);
    }
  }

  if (m.layers.robot) {
    Vec2 r = map.to_pixel(m.robot.position());
    Vec2 nose = map.to_pixel(m.robot.position() + 0.25 * unit_at(m.robot.theta));
    draw::line(img, r.x(), r.y(), nose.x(), nose.y(), half_width, palette::kRobot);
    draw::disc(img, r.x(), r.y(), 1.6 * scale, palette::kRobot);
  }

  if (m.layers.candidates)
    for (const auto& cand : m.candidates) {
      Vec2 p = map.to_pixel(cand.point);
      draw::disc(img, p.x(), p.y(), 1.2 * scale, palette::kCandidate);
      draw::text(img, p.x() + 3.0 * scale, p.y() - 2.0 * scale, std::to_string(cand.index), glyph_scale,
                 palette::kLabel);
    }
  return img;
}

/// Same geometry as render_obstacle_map_plus, as SVG.
inline std::string render_obstacle_map_plus_svg(const ObstacleMapPlus& m, int scale = 4) {
  const int cells = m.base.width();
  const double res = m.base.resolution();
  const int size = cells * scale;
  const detail::ViewMapping map{m.view, 0.5 * cells * res, scale / res};
  auto hex = [](Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  os << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"" << hex(palette::kFree) << "\"/>\n";
  // Local cells: local +x is image up, local +y image left.
  for (int iy = 0; iy < cells; ++iy)
    for (int ix = 0; ix < cells; ++ix) {
      CellState s = m.base.at({ix, iy});
      if (s == CellState::Free) continue;
      int col = (cells - 1 - iy) * scale, row = (cells - 1 - ix) * scale;
      os << "<rect x=\"" << col << "\" y=\"" << row << "\" width=\"" << scale << "\" height=\"" << scale
         << "\" fill=\"" << hex(s == CellState::Occupied ? palette::kOccupied : palette::kUnknown) << "\"/>\n";
    }
  if (m.layers.fan && m.selected) {
    const auto& a = m.directions.at(static_cast<std::size_t>(*m.selected - 1));
    const double reach = 2.0 * cells * res;
    Vec2 c = map.to_pixel(m.centroid);
    os << "<path fill=\"" << hex(palette::kFanTint) << "\" fill-opacity=\"0.45\" d=\"M " << c.x() << ' ' << c.y();
    for (int k = 0; k <= 24; ++k) {
      double b = a.bearing - m.fan_half_angle + k * (2.0 * m.fan_half_angle / 24.0);
      Vec2 p = map.to_pixel(m.centroid + reach * unit_at(b));
      os << " L " << p.x() << ' ' << p.y();
    }
    os << " Z\"/>\n";
  }
  if (m.layers.footprint)
    for (std::size_t i = 0; i < m.footprint_mask.size(); ++i) {
      if (!m.footprint_mask[i]) continue;
      Vec2 p = map.to_pixel(m.global_frame.grid_to_world(m.global_frame.unlinear(i)));
      os << "<circle cx=\"" << p.x() << "\" cy=\"" << p.y() << "\" r=\"" << 0.6 * scale << "\" fill=\""
         << hex(palette::kFootprint) << "\"/>\n";
    }
  const auto& pal = direction_palette();
  Vec2 c0 = map.to_pixel(m.centroid);
  for (const auto& a : m.directions) {
    bool is_selected = m.selected && *m.selected == a.index;
    if (!m.layers.arrows && !(m.layers.selected && is_selected)) continue;
    Vec2 tip = map.to_pixel(a.tip);
    std::string color = hex(pal[static_cast<std::size_t>(a.index - 1)]);
    os << "<line x1=\"" << c0.x() << "\" y1=\"" << c0.y() << "\" x2=\"" << tip.x() << "\" y2=\"" << tip.y()
       << "\" stroke=\"" << color << "\" stroke-width=\"" << std::max(2.0, 0.6 * scale) << "\"/>\n";
    if (m.layers.arrows)
      os << "<text x=\"" << tip.x() << "\" y=\"" << tip.y() << "\" fill=\"" << color << "\">" << a.index
         << "</text>\n";
    if (m.layers.selected && is_selected)
      os << "<text x=\"" << tip.x() << "\" y=\"" << tip.y() - 12 << "\" font-weight=\"bold\">A</text>\n";
  }
  if (m.layers.robot) {
    Vec2 r = map.to_pixel(m.robot.position());
    os << "<circle cx=\"" << r.x() << "\" cy=\"" << r.y() << "\" r=\"" << 1.6 * scale << "\" fill=\""
       << hex(palette::kRobot) << "\"/>\n";
  }
  if (m.layers.candidates)
    for (const auto& cand : m.candidates) {
      Vec2 p = map.to_pixel(cand.point);
      os << "<circle cx=\"" << p.x() << "\" cy=\"" << p.y() << "\" r=\"" << 1.2 * scale << "\" fill=\""
         << hex(palette::kCandidate) << "\"/>\n<text x=\"" << p.x() + 3 * scale << "\" y=\"" << p.y() << "\">"
         << cand.index << "</text>\n";
    }
  os << "</svg>\n";
  return os.str();
}

/// Camera-view raster: depth shading with the target tinted, candidate floor
/// points projected through the camera and numbered.
inline Image render_camera_view(const Capture& cap, const CameraModel& camera,
                                const std::vector<IndexedPoint>& markers = {}) {
  const auto& k = camera.intrinsics;
  Image img(cap.depth.width(), cap.depth.height());
  for (int v = 0; v < img.height(); ++v)
    for (int u = 0; u < img.width(); ++u) {
      const double z = cap.depth.at(u, v);
      const auto shade = static_cast<std::uint8_t>(std::isfinite(z) ? std::lround(235.0 * std::exp(-z / 5.0)) : 20);
      Rgb c{shade, shade, shade};
      if (cap.mask.at(u, v)) c = draw::blend(c, palette::kFootprint, 0.6);
      img.at(u, v) = c;
    }
  const Eigen::Isometry3d world_to_camera = camera.camera_to_world.inverse();
  for (const auto& m : markers) {
    const Vec3 pc = world_to_camera * Vec3(m.point.x(), m.point.y(), 0.0);
    if (pc.z() <= 1e-6) continue;
    const double u = k.fx * pc.x() / pc.z() + k.cx, v = k.fy * pc.y() / pc.z() + k.cy;
    draw::disc(img, u, v, 2.5, palette::kCandidate);
    draw::text(img, u + 6.0, v - 4.0, std::to_string(m.index), 1, Rgb{255, 255, 0});
  }
  return img;
}

}  // namespace baseplace
