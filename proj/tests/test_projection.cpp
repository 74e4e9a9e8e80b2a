#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "baseplace/projection.hpp"

using namespace baseplace;

namespace {

SceneSpec box_scene() {
  SceneSpec s;
  s.base_map = OccupancyGrid(100, 100, 0.05);
  SceneObject o;
  o.id = "crate";
  o.box = Box3{Vec3(2.5, 2.5, 0.4), Vec3(0.6, 0.4, 0.8), 0.3};
  s.objects.push_back(o);
  return s;
}

// Returns a fixed reply regardless of the question.
class FixedOracle final : public Oracle {
 public:
  explicit FixedOracle(std::vector<int> reply) : reply_(std::move(reply)) {}
  std::string name() const override { return "fixed"; }

 protected:
  OracleReply answer(const OracleQuery&) override { return {reply_, "fixed", false}; }

 private:
  std::vector<int> reply_;
};

AffordanceContext open_context(double phase = 0.0) {
  static const OccupancyGrid grid(80, 80, 0.05, Vec2(-2, -2));
  static const FreeSet free = compute_free_set(grid, 0.4);
  AffordanceContext ctx;
  ctx.frame = grid.frame();
  ctx.centroid = Vec2(0.0, 0.0);
  ctx.directions = generate_directions(ctx.centroid, free, kArrowLength, phase);
  return ctx;
}

}  // namespace

TEST(Backprojection, FootprintLiesOnTheObject) {
  SceneSpec s = box_scene();
  const Pose2D robot(1.0, 1.6, bearing(Vec2(1.5, 0.9)));
  CameraModel cam = s.camera_at(robot);
  Capture cap = synthetic_capture(s, cam, "crate");
  auto cells = backproject_mask(cap.depth, cap.mask, cam, s.base_map.frame());
  ASSERT_FALSE(cells.empty());
  EXPECT_TRUE(std::is_sorted(cells.begin(), cells.end()));
  EXPECT_EQ(std::adjacent_find(cells.begin(), cells.end()), cells.end());
  for (const auto& c : cells)
    EXPECT_TRUE(s.objects[0].box.footprint_contains(s.base_map.grid_to_world(c), 0.05 * 0.75));
  Vec2 centroid = compute_centroid(cells, s.base_map.frame());
  EXPECT_LT((centroid - Vec2(2.5, 2.5)).norm(), 0.3);
}

TEST(Backprojection, SinglePixelThroughPinhole) {
  CameraModel cam;
  cam.intrinsics = {100, 100, 2, 2, 5, 5};
  // Camera looking straight down from 2 m: camera x -> world x, camera y -> world -y.
  cam.camera_to_world.linear() << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  cam.camera_to_world.translation() = Vec3(1.0, 1.0, 2.0);
  DepthImage depth(5, 5, 2.0);
  Mask mask(5, 5, 0);
  mask.at(4, 2) = 1;  // two pixels right of center: x = 2 * 2 / 100 = 0.04 m
  GridFrame frame{40, 40, 0.05, Vec2::Zero()};
  auto cells = backproject_mask(depth, mask, cam, frame);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0], *frame.world_to_grid(Vec2(1.04, 1.0)));
  depth.at(4, 2) = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(backproject_mask(depth, mask, cam, frame).empty());
}

TEST(Centroid, EmptyFootprintIsAGroundingError) {
  std::vector<CellIndex> none;
  EXPECT_THROW(compute_centroid(none, GridFrame{10, 10, 0.05, Vec2::Zero()}), GroundingError);
}

TEST(Directions, TwelveArrowsThirtyDegreesApart) {
  for (double phase : {0.0, 0.4, -2.0}) {
    AffordanceContext ctx = open_context(phase);
    for (int i = 1; i <= kDirectionCount; ++i) {
      const auto& a = ctx.arrow(i);
      EXPECT_EQ(a.index, i);
      EXPECT_NEAR(angle_between(a.bearing, phase + (i - 1) * deg(30.0)), 0.0, 1e-12);
      EXPECT_NEAR(a.unit.norm(), 1.0, 1e-12);
      EXPECT_GT(a.length, 0.0);
    }
  }
}

TEST(Directions, ArrowsStartOutsideObstaclesAndStopAtTheFirstExit) {
  OccupancyGrid g(120, 120, 0.05);
  g.fill_rect(Vec2(3.0, 3.0), Vec2(0.6, 0.6), 0.0, CellState::Occupied);  // the object
  g.fill_rect(Vec2(4.5, 3.0), Vec2(0.2, 2.0), 0.0, CellState::Occupied);  // wall to the east
  FreeSet free = compute_free_set(g, 0.4);
  Directions d = generate_directions(Vec2(3.0, 3.0), free, kArrowLength, 0.0);
  // East arrow: enters free space past the clearance band and stops before the wall's band.
  EXPECT_TRUE(free.contains(d[0].tip));
  // Nearest wall cell center is 4.425; the last clear cell ends 0.4 m short of it plus half a cell.
  EXPECT_LE(d[0].tip.x(), 4.425 - 0.4 + 0.025);
  EXPECT_GT(d[0].length, 0.7);
  for (const auto& a : d) {
    if (a.length == 0.0) continue;
    EXPECT_TRUE(free.contains(a.tip)) << a.index;
  }
  // North arrow runs off the map edge and stops at the last cell inside it.
  EXPECT_LT(d[3].length, kArrowLength);
  // West arrow is unobstructed out to the full length.
  EXPECT_DOUBLE_EQ(d[6].length, kArrowLength);
  // Nothing free anywhere: every arrow collapses.
  OccupancyGrid full(20, 20, 0.05, Vec2::Zero(), CellState::Occupied);
  for (const auto& a : generate_directions(Vec2(0.5, 0.5), compute_free_set(full), 1.0)) EXPECT_EQ(a.length, 0.0);
}

TEST(Fan, BoundaryIsInclusiveAtSixtyDegrees) {
  AffordanceContext ctx = open_context(0.0);
  ctx.selected = 1;  // along +x
  EXPECT_TRUE(ctx.in_fan(unit_at(deg(60.0))));
  EXPECT_TRUE(ctx.in_fan(unit_at(-deg(60.0))));
  EXPECT_FALSE(ctx.in_fan(unit_at(deg(60.0) + 1e-6)));
  EXPECT_FALSE(ctx.in_fan(unit_at(-deg(60.0) - 1e-6)));
  EXPECT_TRUE(ctx.in_fan(Vec2(1.0, 0.0)));
  EXPECT_FALSE(ctx.in_fan(Vec2(-1.0, 0.0)));
  ctx.selected.reset();
  EXPECT_FALSE(ctx.in_fan(Vec2(1.0, 0.0)));
}

TEST(Fan, BuildFanMatchesSectorTest) {
  GridFrame f{60, 50, 0.05, Vec2(-1.5, -1.2)};
  const Vec2 c(0.1, 0.2), dir = unit_at(deg(75.0));
  auto cells = build_fan(c, dir, f);
  std::set<CellIndex> in(cells.begin(), cells.end());
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      Vec2 p = f.grid_to_world({x, y});
      double ang = std::acos(std::clamp((p - c).normalized().dot(dir), -1.0, 1.0));
      EXPECT_EQ(in.count({x, y}) == 1, ang <= deg(60.0) + 1e-9) << x << "," << y;
    }
  EXPECT_THROW(build_fan(c, Vec2(2.0, 0.0), f), std::invalid_argument);
}

TEST(DirectionVote, ScriptedOraclePicksArrowNearestTruth) {
  AffordanceContext ctx = open_context(0.1);
  GroundTruth truth;
  truth.direction = deg(95.0);
  ScriptedOracle oracle(truth, {});
  DirectionVote v = select_direction(ctx, oracle, "open it");
  ASSERT_TRUE(v.selected);
  EXPECT_EQ(*v.selected, 4);  // 0.1 rad + 90 degrees
  EXPECT_EQ(oracle.log().size(), 3u);
}

TEST(DirectionVote, InvalidRepliesCountAsUncertain) {
  AffordanceContext ctx = open_context();
  FixedOracle junk({99});
  DirectionVote v = select_direction(ctx, junk, "x");
  EXPECT_EQ(v.votes, (std::array<int, 3>{-1, -1, -1}));
  EXPECT_FALSE(v.selected);
  FixedOracle unsure({-1});
  EXPECT_FALSE(select_direction(ctx, unsure, "x").selected);
}

TEST(Rendering, PaletteColoursAreDistinct) {
  const auto& pal = direction_palette();
  for (std::size_t i = 0; i < pal.size(); ++i)
    for (std::size_t j = i + 1; j < pal.size(); ++j) EXPECT_FALSE(pal[i] == pal[j]);
}

TEST(Rendering, RobotHeadingPointsUp) {
  OccupancyGrid g(100, 100, 0.05);
  g.fill_rect(Vec2(2.5, 3.5), Vec2(0.4, 0.4), 0.0, CellState::Occupied);  // 1 m north of the robot
  AffordanceContext ctx;
  ctx.frame = g.frame();
  ctx.centroid = Vec2(2.5, 3.5);
  ctx.directions = generate_directions(ctx.centroid, compute_free_set(g), 1.0);
  RenderLayers none{false, false, false, false, false, false};
  auto view = make_obstacle_map_plus(g, ctx, Pose2D(2.5, 2.5, std::numbers::pi / 2), {}, none, 60);
  Image img = render_obstacle_map_plus(view, 2);
  ASSERT_EQ(img.width(), 120);
  ASSERT_EQ(img.height(), 120);
  // 1 m ahead = 20 cells = 40 px above the center.
  EXPECT_EQ(img.at(60, 20), palette::kOccupied);
  EXPECT_EQ(img.at(60, 100), palette::kFree);
  EXPECT_EQ(img.at(20, 60), palette::kFree);
}

TEST(Rendering, LayersControlWhatIsDrawn) {
  OccupancyGrid g(100, 100, 0.05);
  AffordanceContext ctx;
  ctx.frame = g.frame();
  ctx.centroid = Vec2(2.5, 2.5);
  ctx.directions = generate_directions(ctx.centroid, compute_free_set(g), 1.0);
  ctx.selected = 3;
  auto count_colour = [](const Image& img, Rgb c) {
    int n = 0;
    for (int v = 0; v < img.height(); ++v)
      for (int u = 0; u < img.width(); ++u) n += img.at(u, v) == c;
    return n;
  };
  const Rgb arrow7 = direction_palette()[6];
  auto full = make_obstacle_map_plus(g, ctx, Pose2D(1.5, 2.5, 0.0), {{0, Vec2(2.0, 2.0)}});
  EXPECT_GT(count_colour(render_obstacle_map_plus(full), arrow7), 0);
  EXPECT_GT(count_colour(render_obstacle_map_plus(full), palette::kCandidate), 0);
  RenderLayers only_selected;
  only_selected.arrows = false;
  auto sel = make_obstacle_map_plus(g, ctx, Pose2D(1.5, 2.5, 0.0), {}, only_selected);
  Image img = render_obstacle_map_plus(sel);
  EXPECT_EQ(count_colour(img, arrow7), 0);
  EXPECT_GT(count_colour(img, direction_palette()[2]), 0);
  std::string svg = render_obstacle_map_plus_svg(full);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find(">A</text>"), std::string::npos);
  EXPECT_NE(svg.find(">12</text>"), std::string::npos);
}

TEST(Rendering, CameraViewTintsTarget) {
  SceneSpec s = box_scene();
  const Pose2D robot(1.0, 1.6, bearing(Vec2(1.5, 0.9)));
  CameraModel cam = s.camera_at(robot);
  Capture cap = synthetic_capture(s, cam, "crate");
  Image img = render_camera_view(cap, cam, {{1, Vec2(2.0, 2.0)}});
  EXPECT_EQ(img.width(), cam.intrinsics.width);
  int tinted = 0;
  for (int v = 0; v < img.height(); ++v)
    for (int u = 0; u < img.width(); ++u) tinted += cap.mask.at(u, v) && img.at(u, v).g > img.at(u, v).r;
  EXPECT_GT(tinted, 0);
}
