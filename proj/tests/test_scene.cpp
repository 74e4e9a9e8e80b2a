#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>

#include "baseplace/scene.hpp"

using namespace baseplace;

namespace {

// Classic slab test on an axis-aligned box (yaw applied by rotating the ray).
std::optional<double> slab(const Box3& b, const Vec3& origin, const Vec3& dir) {
  const double c = std::cos(-b.yaw), s = std::sin(-b.yaw);
  Vec3 o = origin - b.center;
  o = Vec3(c * o.x() - s * o.y(), s * o.x() + c * o.y(), o.z());
  Vec3 d(c * dir.x() - s * dir.y(), s * dir.x() + c * dir.y(), dir.z());
  double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double h = 0.5 * b.size[a];
    if (d[a] == 0.0) {
      if (std::abs(o[a]) > h) return std::nullopt;
      continue;
    }
    double t1 = (-h - o[a]) / d[a], t2 = (h - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  }
  if (tmin > tmax || tmax <= 0.0) return std::nullopt;
  return tmin > 0.0 ? tmin : tmax;
}

std::string minimal_scene(const std::string& objects) {
  return R"({"schema":1,"name":"t","map":{"width":40,"height":40,"resolution":0.05},"objects":[)" + objects + "]}";
}

}  // namespace

TEST(Box3, IntersectAgreesWithSlabTest) {
  Pcg32 rng(21, 4);
  int hits = 0;
  for (int i = 0; i < 20000; ++i) {
    Box3 b;
    b.center = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 1));
    b.size = Vec3(rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5));
    b.yaw = rng.uniform(-3.1, 3.1);
    Vec3 o(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 2));
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    if (i % 2) d = b.center - o + 0.5 * d;  // aim near the box so about half the rays hit
    auto got = b.intersect(o, d);
    auto want = slab(b, o, d);
    ASSERT_EQ(got.has_value(), want.has_value()) << i;
    if (got) {
      ++hits;
      ASSERT_NEAR(*got, *want, 1e-9);
    }
  }
  EXPECT_GT(hits, 3000);
}

TEST(Box3, ContainsAndFootprint) {
  Box3 b{Vec3(1, 1, 0.5), Vec3(2, 1, 1), std::numbers::pi / 2};
  EXPECT_TRUE(b.footprint_contains(Vec2(1.0, 1.9)));   // long axis now along y
  EXPECT_FALSE(b.footprint_contains(Vec2(1.9, 1.0)));
  EXPECT_TRUE(b.contains(Vec3(1.0, 1.0, 1.04), 0.05));
  EXPECT_FALSE(b.contains(Vec3(1.0, 1.0, 1.06), 0.05));
}

TEST(SceneLoading, ShippedScenesAndTasksLoad) {
  const std::filesystem::path data(BASEPLACE_DATA_DIR);
  int tasks = 0;
  for (const auto& e : std::filesystem::directory_iterator(data / "tasks")) {
    TaskSpec t = load_task_file(e.path());
    SceneSpec s = load_scene_file(t.scene_path);
    EXPECT_NO_THROW(s.object(t.object_id));
    EXPECT_GT(t.approach_half_angle, 0.0);
    ++tasks;
  }
  EXPECT_EQ(tasks, 5);
}

TEST(SceneLoading, ReportsMalformedInput) {
  EXPECT_THROW(load_scene("{"), SceneError);
  EXPECT_THROW(load_scene(R"({"schema":2,"map":{},"objects":[]})"), SceneError);
  EXPECT_THROW(load_scene(R"({"schema":1,"map":{}})"), SceneError);
  EXPECT_THROW(load_scene(minimal_scene(R"({"id":"a"})")), SceneError);
  EXPECT_THROW(load_scene(minimal_scene(R"({"id":"a","box":{"center":[1,1],"extents":[1,1,1]}})")), SceneError);
  // Keypoint far from its box.
  EXPECT_THROW(load_scene(minimal_scene(
                   R"({"id":"a","box":{"center":[1,1,0.5],"extents":[0.4,0.4,1]},"gt_keypoint":[1.5,1,0.5]})")),
               SceneError);
  // Box outside the 2 m x 2 m map.
  EXPECT_THROW(load_scene(minimal_scene(R"({"id":"a","box":{"center":[2.1,1,0.5],"extents":[0.4,0.4,1]}})")),
               SceneError);
  EXPECT_THROW(load_scene(minimal_scene(R"({"id":"a","box":{"center":[1,1,0.5],"extents":[0.4,0.4,1]}},)"
                                        R"({"id":"a","box":{"center":[1,1,0.5],"extents":[0.4,0.4,1]}})")),
               SceneError);
  EXPECT_THROW(load_task(R"({"schema":1,"object_id":"a","sub_instruction":"x","preferred_radius":-1})"), SceneError);
  EXPECT_THROW(load_task(R"({"schema":1,"object_id":"a"})"), SceneError);
}

TEST(SceneLoading, OccupancyMarksBoxes) {
  SceneSpec s = load_scene(minimal_scene(R"({"id":"a","box":{"center":[1,1,0.5],"extents":[0.4,0.4,1]}})"));
  OccupancyGrid g = s.occupancy();
  EXPECT_EQ(g.at_world(Vec2(1.0, 1.0)), CellState::Occupied);
  EXPECT_EQ(g.at_world(Vec2(1.3, 1.0)), CellState::Free);
}

class ShippedTask : public ::testing::Test {
 protected:
  void SetUp() override {
    task = load_task_file(std::filesystem::path(BASEPLACE_DATA_DIR) / "tasks" / "open_cabinet.json");
    scene = load_scene_file(task.scene_path);
  }
  TaskSpec task;
  SceneSpec scene;
};

TEST_F(ShippedTask, RandomizedTrialsAreDeterministicAndCollisionFree) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TrialSetup a = randomize_trial(scene, task, seed), b = randomize_trial(scene, task, seed);
    EXPECT_EQ(a, b);
    SceneSpec moved = apply_trial(scene, a);
    FreeSet free = compute_free_set(moved.occupancy());
    EXPECT_TRUE(free.contains(a.robot_start.position()));
    const Vec2 c = moved.object(task.object_id).box.center.head<2>();
    EXPECT_NEAR(angle_between(a.robot_start.theta, bearing(c - a.robot_start.position())), 0.0, 1e-9);
  }
}

TEST_F(ShippedTask, PerturbationMovesKeypointRigidly) {
  TrialSetup setup;
  setup.perturbations["cabinet"] = {0.1, -0.2, 0.5};
  SceneSpec moved = apply_trial(scene, setup);
  const auto& before = scene.object("cabinet");
  const auto& after = moved.object("cabinet");
  EXPECT_NEAR((*after.gt_keypoint - after.box.center).norm(), (*before.gt_keypoint - before.box.center).norm(), 1e-12);
  EXPECT_TRUE(after.box.contains(*after.gt_keypoint, 0.05));
  EXPECT_NEAR(angle_between(*after.gt_direction, *before.gt_direction + 0.5), 0.0, 1e-12);
}

TEST(Camera, MountIsProperRigidTransform) {
  SceneSpec s;
  for (double th : {0.0, 1.0, -2.5}) {
    CameraModel cam = s.camera_at(Pose2D(1, 2, th));
    EXPECT_NO_THROW(cam.validate());
    EXPECT_NEAR(cam.position().z(), s.mount.height, 1e-12);
  }
  CameraModel bad;
  bad.camera_to_world.linear() = Eigen::Matrix3d::Identity() * 2.0;
  EXPECT_THROW(bad.validate(), SceneError);
}

TEST(Capture, CenterPixelDepthOnAWall) {
  SceneSpec s = load_scene(minimal_scene(R"({"id":"wall","box":{"center":[1.5,1,1],"extents":[0.1,1.9,2]}})"));
  s.intrinsics = {100, 100, 40, 30, 81, 61};
  Pose2D robot(0.95, 1.0, 0.0);  // wall face at x = 1.45, 0.5 m ahead
  CameraModel cam = s.camera_at(robot);
  Capture cap = synthetic_capture(s, cam, "wall");
  const double expected = 0.5 / std::cos(s.mount.pitch);
  EXPECT_NEAR(cap.depth.at(40, 30), expected, 1e-9);
  EXPECT_EQ(cap.mask.at(40, 30), 1);
}
