#pragma once

// 2D occupancy grids.
//
// Frame convention: cell (0, 0) has its lower-left corner at `origin`; +x runs
// along columns (ix), +y along rows (iy), headings are CCW from +x.  All
// distances are between cell centers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "baseplace/geometry.hpp"

namespace baseplace {

enum class CellState : std::uint8_t { Free = 0, Occupied = 1, Unknown = 2 };

struct CellIndex {
  int ix = 0;
  int iy = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

/// Shared geometry of any raster laid over the world plane.
struct GridFrame {
  int width = 0;
  int height = 0;
  double resolution = 0.05;
  Vec2 origin = Vec2::Zero();

  bool contains(CellIndex c) const { return c.ix >= 0 && c.iy >= 0 && c.ix < width && c.iy < height; }
  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t linear(CellIndex c) const {
    return static_cast<std::size_t>(c.iy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.ix);
  }
  CellIndex unlinear(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(width)), static_cast<int>(i / static_cast<std::size_t>(width))};
  }

  /// Cell containing `p`, or nullopt when `p` lies outside the grid.
  std::optional<CellIndex> world_to_grid(const Vec2& p) const {
    if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    double fx = std::floor((p.x() - origin.x()) / resolution);
    double fy = std::floor((p.y() - origin.y()) / resolution);
    if (!(fx >= 0.0 && fy >= 0.0 && fx < width && fy < height)) return std::nullopt;
    return CellIndex{static_cast<int>(fx), static_cast<int>(fy)};
  }

  Vec2 grid_to_world(CellIndex c) const {
    return {origin.x() + (c.ix + 0.5) * resolution, origin.y() + (c.iy + 0.5) * resolution};
  }

  Vec2 extent() const { return {width * resolution, height * resolution}; }

  friend bool operator==(const GridFrame& a, const GridFrame& b) {
    return a.width == b.width && a.height == b.height && a.resolution == b.resolution && a.origin == b.origin;
  }
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(int width, int height, double resolution, Vec2 origin = Vec2::Zero(),
                CellState fill = CellState::Free)
      : frame_{width, height, resolution, origin} {
    if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
    if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    cells_.assign(frame_.size(), fill);
  }

  /// Default global map: 200 x 200 cells at 0.05 m.
  static OccupancyGrid global_default() { return OccupancyGrid(200, 200, 0.05); }

  const GridFrame& frame() const { return frame_; }
  int width() const { return frame_.width; }
  int height() const { return frame_.height; }
  double resolution() const { return frame_.resolution; }
  const Vec2& origin() const { return frame_.origin; }
  bool contains(CellIndex c) const { return frame_.contains(c); }

  CellState at(CellIndex c) const { return cells_[frame_.linear(c)]; }
  void set(CellIndex c, CellState s) { cells_[frame_.linear(c)] = s; }
  const std::vector<CellState>& cells() const { return cells_; }

  std::optional<CellIndex> world_to_grid(const Vec2& p) const { return frame_.world_to_grid(p); }
  Vec2 grid_to_world(CellIndex c) const { return frame_.grid_to_world(c); }

  /// State at a world point; outside the grid reads as Unknown.
  CellState at_world(const Vec2& p) const {
    auto c = world_to_grid(p);
    return c ? at(*c) : CellState::Unknown;
  }

  /// Marks every cell whose center lies inside the oriented rectangle.
  void fill_rect(const Vec2& center, const Vec2& size, double yaw, CellState s) {
    Pose2D box(center, yaw);
    for (int iy = 0; iy < height(); ++iy)
      for (int ix = 0; ix < width(); ++ix) {
        Vec2 local = box.to_local(grid_to_world({ix, iy}));
        if (std::abs(local.x()) <= 0.5 * size.x() && std::abs(local.y()) <= 0.5 * size.y()) set({ix, iy}, s);
      }
  }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  GridFrame frame_;
  std::vector<CellState> cells_;
};

/// Which cell states count as obstacles for distance computations.
enum class ObstaclePolicy { OccupiedOnly, OccupiedOrUnknown };

inline bool is_obstacle(CellState s, ObstaclePolicy policy) {
  return s == CellState::Occupied || (policy == ObstaclePolicy::OccupiedOrUnknown && s == CellState::Unknown);
}

/// Per-cell Euclidean distance (meters) to the nearest obstacle cell center.
struct DistanceMap {
  GridFrame frame;
  std::vector<double> meters;

  static constexpr double kInfinity = std::numeric_limits<double>::infinity();

  double at(CellIndex c) const { return meters[frame.linear(c)]; }
};

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), squared distances
// in cell units.  `f` holds 0 at obstacles and kFar elsewhere.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& out, std::vector<int>& v,
                   std::vector<double>& z) {
  constexpr double kFar = 1e20;
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kFar;
      z[1] = kFar;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;  // z[0] = -kFar keeps k >= 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kFar;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kFar);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace detail

/// Exact Euclidean distance transform over cell centers.  Obstacle cells map
/// to 0; a grid without obstacles maps everywhere to +infinity.
inline DistanceMap distance_transform(const OccupancyGrid& grid,
                                      ObstaclePolicy policy = ObstaclePolicy::OccupiedOnly) {
  const int w = grid.width(), h = grid.height();
  if (w <= 0 || h <= 0) throw std::invalid_argument("distance_transform on empty grid");
  constexpr double kFar = 1e20;
  std::vector<double> sq(grid.frame().size(), kFar);
  for (std::size_t i = 0; i < sq.size(); ++i)
    if (is_obstacle(grid.cells()[i], policy)) sq[i] = 0.0;

  const int n = std::max(w, h);
  std::vector<double> f, out;
  std::vector<int> v(n + 1);
  std::vector<double> z(n + 2);

  f.resize(h);
  out.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq[static_cast<std::size_t>(y) * w + x];
    detail::edt_1d(f, out, v, z);
    for (int y = 0; y < h; ++y) sq[static_cast<std::size_t>(y) * w + x] = out[y];
  }
  f.resize(w);
  out.resize(w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(sq.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    detail::edt_1d(f, out, v, z);
    std::copy_n(out.begin(), w, sq.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }

  DistanceMap dm{grid.frame(), {}};
  dm.meters.resize(sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i)
    dm.meters[i] = sq[i] >= kFar * 0.5 ? DistanceMap::kInfinity : std::sqrt(sq[i]) * grid.resolution();
  return dm;
}

/// Collision-free placements: Free cells at least `clearance` from every
/// Occupied or Unknown cell center.
class FreeSet {
 public:
  FreeSet() = default;
  FreeSet(GridFrame frame, std::vector<std::uint8_t> mask, double clearance)
      : frame_(std::move(frame)), mask_(std::move(mask)), clearance_(clearance) {}

  const GridFrame& frame() const { return frame_; }
  double clearance() const { return clearance_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  bool contains(CellIndex c) const { return frame_.contains(c) && mask_[frame_.linear(c)] != 0; }
  bool contains(const Vec2& p) const {
    auto c = frame_.world_to_grid(p);
    return c && mask_[frame_.linear(*c)] != 0;
  }

  std::size_t count() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }
  bool empty() const { return count() == 0; }

  double free_area() const { return static_cast<double>(count()) * frame_.resolution * frame_.resolution; }

 private:
  GridFrame frame_;
  std::vector<std::uint8_t> mask_;
  double clearance_ = 0.4;
};

inline constexpr double kDefaultClearance = 0.4;

inline FreeSet compute_free_set(const OccupancyGrid& grid, double clearance = kDefaultClearance) {
  if (clearance < 0.0) throw std::invalid_argument("clearance must be non-negative");
  DistanceMap dm = distance_transform(grid, ObstaclePolicy::OccupiedOrUnknown);
  std::vector<std::uint8_t> mask(grid.frame().size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = grid.cells()[i] == CellState::Free && dm.meters[i] >= clearance ? 1 : 0;
  return FreeSet(grid.frame(), std::move(mask), clearance);
}

/// Robot-aligned square map of `size` cells centered on the robot.  The local
/// frame has +x along the robot heading; its origin is chosen so the robot sits
/// at local (0, 0).  Cells are sampled nearest-neighbour from the global map;
/// samples outside it are Unknown.
inline OccupancyGrid extract_local_egocentric(const OccupancyGrid& global, const Pose2D& robot, int size) {
  if (size <= 0) throw std::invalid_argument("local map size must be positive");
  const double res = global.resolution();
  const double half = 0.5 * size * res;
  OccupancyGrid local(size, size, res, Vec2(-half, -half), CellState::Unknown);
  for (int iy = 0; iy < size; ++iy)
    for (int ix = 0; ix < size; ++ix) {
      Vec2 world = robot.to_world(local.grid_to_world({ix, iy}));
      local.set({ix, iy}, global.at_world(world));
    }
  return local;
}

}  // namespace baseplace
