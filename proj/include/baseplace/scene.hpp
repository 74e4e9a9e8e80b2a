#pragma once

// Synthetic worlds: yawed 3D boxes over an occupancy map, task definitions,
// seeded trial randomization and a pinhole depth/mask capture by ray casting.
//
// Ground-truth fields (gt_keypoint, gt_direction) exist for the scripted
// oracle and the success model only; nothing on the planning path reads them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "baseplace/geometry.hpp"
#include "baseplace/gridmap.hpp"
#include "baseplace/image.hpp"
#include "baseplace/map_io.hpp"
#include "baseplace/rng.hpp"

namespace baseplace {

struct SceneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrialError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Box with vertical yaw axis.  `size` holds full edge lengths.
struct Box3 {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;

  Pose2D planar() const { return Pose2D(center.x(), center.y(), yaw); }

  Vec3 to_local(const Vec3& p) const {
    Vec2 xy = planar().to_local(p.head<2>());
    return {xy.x(), xy.y(), p.z() - center.z()};
  }

  bool contains(const Vec3& p, double tol = 0.0) const {
    Vec3 l = to_local(p);
    return std::abs(l.x()) <= 0.5 * size.x() + tol && std::abs(l.y()) <= 0.5 * size.y() + tol &&
           std::abs(l.z()) <= 0.5 * size.z() + tol;
  }

  bool footprint_contains(const Vec2& p, double tol = 0.0) const {
    Vec2 l = planar().to_local(p);
    return std::abs(l.x()) <= 0.5 * size.x() + tol && std::abs(l.y()) <= 0.5 * size.y() + tol;
  }

  std::array<Vec2, 4> footprint_corners() const {
    Pose2D p = planar();
    double hx = 0.5 * size.x(), hy = 0.5 * size.y();
    return {p.to_world({hx, hy}), p.to_world({-hx, hy}), p.to_world({-hx, -hy}), p.to_world({hx, -hy})};
  }

  /// Smallest ray parameter t > 0 at which origin + t * dir meets the box
  /// surface, found by intersecting the six face planes.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const {
    Vec3 o = to_local(origin);
    double c = std::cos(yaw), s = std::sin(yaw);
    Vec3 d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
    const Vec3 half = 0.5 * size;
    constexpr double kEps = 1e-12;
    std::optional<double> best;
    for (int axis = 0; axis < 3; ++axis) {
      if (d[axis] == 0.0) continue;
      for (double sign : {-1.0, 1.0}) {
        double t = (sign * half[axis] - o[axis]) / d[axis];
        if (!(t > kEps)) continue;
        Vec3 p = o + t * d;
        bool inside = true;
        for (int other = 0; other < 3 && inside; ++other)
          if (other != axis && std::abs(p[other]) > half[other] * (1.0 + 1e-12) + 1e-12) inside = false;
        if (inside && (!best || t < *best)) best = t;
      }
    }
    return best;
  }
};

struct SceneObject {
  std::string id;
  Box3 box;
  std::optional<Vec3> gt_keypoint;
  std::optional<double> gt_direction;
  bool direction_constrained = false;
  std::uint64_t feature_seed = 0;
};

struct CameraIntrinsics {
  double fx = 120.0, fy = 120.0, cx = 80.0, cy = 60.0;
  int width = 160, height = 120;
};

/// Camera placement relative to the robot base: `forward` meters ahead of the
/// base center, `height` above the floor, pitched down by `pitch` radians.
struct CameraMount {
  double forward = 0.0;
  double height = 1.3;
  double pitch = 0.6;
};

/// Pinhole camera in the OpenCV convention (x right, y down, z forward).
struct CameraModel {
  CameraIntrinsics intrinsics;
  Eigen::Isometry3d camera_to_world = Eigen::Isometry3d::Identity();

  /// Ray through pixel (u, v) in world coordinates, scaled so that the ray
  /// parameter equals camera-frame depth z.
  Vec3 ray(double u, double v) const {
    Vec3 d((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0);
    return camera_to_world.linear() * d;
  }
  Vec3 position() const { return camera_to_world.translation(); }

  void validate() const {
    if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) throw SceneError("camera: fx and fy must be positive");
    if (intrinsics.width <= 0 || intrinsics.height <= 0) throw SceneError("camera: image size must be positive");
    const auto& r = camera_to_world.linear();
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(r.determinant() - 1.0) > 1e-9)
      throw SceneError("camera: extrinsic rotation is not a proper rotation");
  }
};

inline CameraModel mount_camera(const CameraIntrinsics& k, const CameraMount& m, const Pose2D& robot) {
  const double ct = std::cos(robot.theta), st = std::sin(robot.theta);
  const double cp = std::cos(m.pitch), sp = std::sin(m.pitch);
  Vec3 forward(ct * cp, st * cp, -sp);
  Vec3 right(st, -ct, 0.0);
  Vec3 down = forward.cross(right);
  CameraModel cam;
  cam.intrinsics = k;
  cam.camera_to_world.linear().col(0) = right;
  cam.camera_to_world.linear().col(1) = down;
  cam.camera_to_world.linear().col(2) = forward;
  cam.camera_to_world.translation() = Vec3(robot.x + m.forward * ct, robot.y + m.forward * st, m.height);
  return cam;
}

struct SceneSpec {
  int schema = 1;
  std::string name;
  OccupancyGrid base_map;  // static structure not described by boxes
  std::vector<SceneObject> objects;
  CameraIntrinsics intrinsics;
  CameraMount mount;

  const SceneObject* find(const std::string& id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  const SceneObject& object(const std::string& id) const {
    if (const auto* o = find(id)) return *o;
    throw SceneError("unknown object '" + id + "'");
  }

  /// Base map with every object footprint marked Occupied.
  OccupancyGrid occupancy() const {
    OccupancyGrid grid = base_map;
    for (const auto& o : objects)
      grid.fill_rect(o.box.center.head<2>(), o.box.size.head<2>(), o.box.yaw, CellState::Occupied);
    return grid;
  }

  CameraModel camera_at(const Pose2D& robot) const { return mount_camera(intrinsics, mount, robot); }
};

/// Ranges used when randomizing a trial.  Start poses are drawn on an annulus
/// around the target center at a bearing measured from the target's
/// ground-truth approach direction.
struct TrialRanges {
  double start_radius_min = 1.0;
  double start_radius_max = 1.5;
  double start_bearing_offset = 0.0;
  double start_bearing_half_width = deg(90.0);
  double object_dx = 0.0;
  double object_dy = 0.0;
  double object_dyaw = 0.0;
  std::vector<std::string> perturb;  // objects moved rigidly with the target
};

struct TaskSpec {
  int schema = 1;
  std::string name;
  std::filesystem::path scene_path;
  std::string object_id;
  std::string sub_instruction;
  double preferred_radius = 0.7;
  double reach_tolerance = 0.25;
  double approach_half_angle = deg(60.0);
  TrialRanges ranges;
};

struct ObjectPerturbation {
  double dx = 0.0, dy = 0.0, dyaw = 0.0;
  friend bool operator==(const ObjectPerturbation&, const ObjectPerturbation&) = default;
};

struct TrialSetup {
  std::uint64_t seed = 0;
  Pose2D robot_start;
  std::map<std::string, ObjectPerturbation> perturbations;
  friend bool operator==(const TrialSetup&, const TrialSetup&) = default;
};

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SceneError(where + ": missing field '" + key + "'");
  return j.at(key);
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const std::string& where) {
  try {
    return field(j, key, where).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SceneError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return get_field<T>(j, key, where);
}

template <int N>
Eigen::Matrix<double, N, 1> get_vec(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& a = field(j, key, where);
  if (!a.is_array() || a.size() != N) throw SceneError(where + ": field '" + key + "' must be an array of " +
                                                       std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!a[i].is_number()) throw SceneError(where + ": field '" + key + "' must hold numbers");
    v[i] = a[i].get<double>();
  }
  return v;
}

inline void check_schema(const nlohmann::json& doc, const std::string& where) {
  int schema = get_field<int>(doc, "schema", where);
  if (schema != 1) throw SceneError(where + ": unsupported schema " + std::to_string(schema));
}

}  // namespace detail

inline void validate_scene(const SceneSpec& scene) {
  std::set<std::string> ids;
  const Vec2 lo = scene.base_map.origin();
  const Vec2 hi = lo + scene.base_map.frame().extent();
  for (const auto& o : scene.objects) {
    if (o.id.empty()) throw SceneError("object with empty id");
    if (!ids.insert(o.id).second) throw SceneError("duplicate object id '" + o.id + "'");
    if ((o.box.size.array() <= 0.0).any()) throw SceneError("object '" + o.id + "': extents must be positive");
    for (const Vec2& c : o.box.footprint_corners())
      if (c.x() < lo.x() - 1e-9 || c.y() < lo.y() - 1e-9 || c.x() > hi.x() + 1e-9 || c.y() > hi.y() + 1e-9)
        throw SceneError("object '" + o.id + "': box lies outside the map bounds");
    if (o.gt_keypoint && !o.box.contains(*o.gt_keypoint, 0.05))
      throw SceneError("object '" + o.id + "': gt_keypoint is not on the box");
  }
}

/// Parses a scene document.  Relative map paths resolve against `base_dir`.
inline SceneSpec load_scene(const std::string& text, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SceneError(std::string("scene: malformed JSON: ") + e.what());
  }
  check_schema(doc, "scene");
  SceneSpec scene;
  scene.name = get_or<std::string>(doc, "name", "", "scene");

  const auto& map = field(doc, "map", "scene");
  if (map.contains("pgm")) {
    auto path = base_dir / get_field<std::string>(map, "pgm", "scene.map");
    scene.base_map = load_map(path);
  } else {
    int w = get_or<int>(map, "width", 200, "scene.map");
    int h = get_or<int>(map, "height", 200, "scene.map");
    double res = get_or<double>(map, "resolution", 0.05, "scene.map");
    Vec2 origin = map.contains("origin") ? get_vec<2>(map, "origin", "scene.map") : Vec2(0, 0);
    if (w <= 0 || h <= 0) throw SceneError("scene.map: width and height must be positive");
    if (!(res > 0.0)) throw SceneError("scene.map: resolution must be positive");
    scene.base_map = OccupancyGrid(w, h, res, origin);
  }

  if (doc.contains("camera")) {
    const auto& cam = doc.at("camera");
    auto& k = scene.intrinsics;
    k.fx = get_field<double>(cam, "fx", "scene.camera");
    k.fy = get_field<double>(cam, "fy", "scene.camera");
    k.cx = get_field<double>(cam, "cx", "scene.camera");
    k.cy = get_field<double>(cam, "cy", "scene.camera");
    k.width = get_field<int>(cam, "width", "scene.camera");
    k.height = get_field<int>(cam, "height", "scene.camera");
    if (!(k.fx > 0 && k.fy > 0)) throw SceneError("scene.camera: fx and fy must be positive");
    if (cam.contains("mount")) {
      const auto& m = cam.at("mount");
      scene.mount.forward = get_or<double>(m, "forward", 0.0, "scene.camera.mount");
      scene.mount.height = get_or<double>(m, "height", 1.3, "scene.camera.mount");
      scene.mount.pitch = get_or<double>(m, "pitch", 0.6, "scene.camera.mount");
    }
  }

  const auto& objects = field(doc, "objects", "scene");
  if (!objects.is_array()) throw SceneError("scene: field 'objects' must be an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& jo = objects[i];
    SceneObject o;
    std::string where = "scene.objects[" + std::to_string(i) + "]";
    o.id = get_field<std::string>(jo, "id", where);
    where = "object '" + o.id + "'";
    const auto& box = field(jo, "box", where);
    o.box.center = get_vec<3>(box, "center", where + ".box");
    o.box.size = get_vec<3>(box, "extents", where + ".box");
    o.box.yaw = get_or<double>(box, "yaw", 0.0, where + ".box");
    if (jo.contains("gt_keypoint")) o.gt_keypoint = get_vec<3>(jo, "gt_keypoint", where);
    if (jo.contains("gt_direction")) o.gt_direction = get_field<double>(jo, "gt_direction", where);
    o.direction_constrained = get_or<bool>(jo, "direction_constrained", false, where);
    o.feature_seed = get_or<std::uint64_t>(jo, "feature_seed", i + 1, where);
    scene.objects.push_back(std::move(o));
  }
  validate_scene(scene);
  return scene;
}

inline SceneSpec load_scene_file(const std::filesystem::path& path) {
  return load_scene(detail::read_bytes(path.string()), path.parent_path());
}

inline TaskSpec load_task(const std::string& text, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SceneError(std::string("task: malformed JSON: ") + e.what());
  }
  check_schema(doc, "task");
  TaskSpec t;
  t.name = get_or<std::string>(doc, "name", "", "task");
  if (doc.contains("scene")) t.scene_path = base_dir / get_field<std::string>(doc, "scene", "task");
  t.object_id = get_field<std::string>(doc, "object_id", "task");
  t.sub_instruction = get_field<std::string>(doc, "sub_instruction", "task");
  t.preferred_radius = get_or<double>(doc, "preferred_radius", 0.7, "task");
  t.reach_tolerance = get_or<double>(doc, "reach_tolerance", 0.25, "task");
  t.approach_half_angle = get_or<double>(doc, "approach_half_angle", deg(60.0), "task");
  if (!(t.preferred_radius > 0.0)) throw SceneError("task: preferred_radius must be positive");
  if (!(t.reach_tolerance > 0.0)) throw SceneError("task: reach_tolerance must be positive");
  if (!(t.approach_half_angle > 0.0 && t.approach_half_angle <= std::numbers::pi))
    throw SceneError("task: approach_half_angle must lie in (0, pi]");
  if (doc.contains("randomization")) {
    const auto& r = doc.at("randomization");
    auto& g = t.ranges;
    const std::string where = "task.randomization";
    g.start_radius_min = get_or<double>(r, "start_radius_min", g.start_radius_min, where);
    g.start_radius_max = get_or<double>(r, "start_radius_max", g.start_radius_max, where);
    g.start_bearing_offset = get_or<double>(r, "start_bearing_offset", g.start_bearing_offset, where);
    g.start_bearing_half_width = get_or<double>(r, "start_bearing_half_width", g.start_bearing_half_width, where);
    g.object_dx = get_or<double>(r, "object_dx", 0.0, where);
    g.object_dy = get_or<double>(r, "object_dy", 0.0, where);
    g.object_dyaw = get_or<double>(r, "object_dyaw", 0.0, where);
    g.perturb = get_or<std::vector<std::string>>(r, "perturb", {}, where);
    if (g.start_radius_min < 0.0 || g.start_radius_max < g.start_radius_min)
      throw SceneError(where + ": invalid start radius range");
    if (g.object_dx < 0 || g.object_dy < 0 || g.object_dyaw < 0 || g.start_bearing_half_width < 0)
      throw SceneError(where + ": ranges must be non-negative");
  }
  return t;
}

inline TaskSpec load_task_file(const std::filesystem::path& path) {
  return load_task(detail::read_bytes(path.string()), path.parent_path());
}

// ---------------------------------------------------------------------------
// Trials

inline SceneSpec apply_trial(const SceneSpec& scene, const TrialSetup& trial) {
  SceneSpec out = scene;
  for (auto& o : out.objects) {
    auto it = trial.perturbations.find(o.id);
    if (it == trial.perturbations.end()) continue;
    const auto& d = it->second;
    const Vec3 old_center = o.box.center;
    o.box.center += Vec3(d.dx, d.dy, 0.0);
    o.box.yaw = normalize_angle(o.box.yaw + d.dyaw);
    if (o.gt_keypoint) {
      Vec2 rel = Pose2D(0, 0, d.dyaw).to_world(o.gt_keypoint->head<2>() - old_center.head<2>());
      o.gt_keypoint = Vec3(o.box.center.x() + rel.x(), o.box.center.y() + rel.y(), o.gt_keypoint->z());
    }
    if (o.gt_direction) o.gt_direction = normalize_angle(*o.gt_direction + d.dyaw);
  }
  validate_scene(out);
  return out;
}

/// Robot start on the task's annulus, facing the target, inside the FreeSet
/// of the perturbed scene.  Deterministic in (scene, task, seed).
inline TrialSetup randomize_trial(const SceneSpec& scene, const TaskSpec& task, std::uint64_t seed,
                                  double clearance = kDefaultClearance) {
  const SceneObject& target = scene.object(task.object_id);
  const auto& r = task.ranges;
  Pcg32 rng = stream_for(seed, "trial");
  auto draw = [&](double half) { return half > 0.0 ? rng.uniform(-half, half) : 0.0; };

  constexpr int kLayouts = 50;
  constexpr int kStarts = 200;
  for (int layout = 0; layout < kLayouts; ++layout) {
    TrialSetup setup;
    setup.seed = seed;
    const double dx = draw(r.object_dx), dy = draw(r.object_dy), dyaw = draw(r.object_dyaw);
    const Vec2 pivot = target.box.center.head<2>();
    std::vector<std::string> group = r.perturb;
    if (std::find(group.begin(), group.end(), target.id) == group.end()) group.push_back(target.id);
    if (dx != 0.0 || dy != 0.0 || dyaw != 0.0) {
      for (const auto& id : group) {
        const Vec2 c = scene.object(id).box.center.head<2>();
        Vec2 moved = pivot + Pose2D(0, 0, dyaw).to_world(c - pivot) + Vec2(dx, dy);
        setup.perturbations[id] = {moved.x() - c.x(), moved.y() - c.y(), dyaw};
      }
    }
    SceneSpec trial_scene;
    try {
      trial_scene = apply_trial(scene, setup);
    } catch (const SceneError&) {
      continue;
    }
    const SceneObject& t = trial_scene.object(task.object_id);
    FreeSet free = compute_free_set(trial_scene.occupancy(), clearance);
    const Vec2 center = t.box.center.head<2>();
    const double base = t.gt_direction.value_or(0.0) + r.start_bearing_offset;
    for (int attempt = 0; attempt < kStarts; ++attempt) {
      double b = base + draw(r.start_bearing_half_width);
      double rad = r.start_radius_max > r.start_radius_min ? rng.uniform(r.start_radius_min, r.start_radius_max)
                                                           : r.start_radius_min;
      Vec2 p = center + rad * unit_at(b);
      if (!free.contains(p)) continue;
      setup.robot_start = facing(p, center);
      return setup;
    }
  }
  throw TrialError("no collision-free robot start found for task '" + task.name + "'");
}

// ---------------------------------------------------------------------------
// Synthetic capture

struct Capture {
  DepthImage depth;  // camera-frame z in meters; +inf where no box is hit
  Mask mask;         // 1 where the first hit belongs to the target
};

inline Capture synthetic_capture(const SceneSpec& scene, const CameraModel& camera, const std::string& target) {
  const auto& k = camera.intrinsics;
  Capture cap{DepthImage(k.width, k.height, std::numeric_limits<double>::infinity()), Mask(k.width, k.height, 0)};
  const SceneObject& tgt = scene.object(target);
  const Vec3 origin = camera.position();
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Vec3 dir = camera.ray(u, v);
      double best = std::numeric_limits<double>::infinity();
      const SceneObject* hit = nullptr;
      for (const auto& o : scene.objects) {
        auto t = o.box.intersect(origin, dir);
        if (t && *t < best) {
          best = *t;
          hit = &o;
        }
      }
      cap.depth.at(u, v) = best;
      cap.mask.at(u, v) = hit == &tgt ? 1 : 0;
    }
  return cap;
}

}  // namespace baseplace
