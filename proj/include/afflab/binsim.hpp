#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afflab/heightmap.hpp"
#include "afflab/keyvalue.hpp"
#include "afflab/random.hpp"

namespace afflab::sim {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

enum class TopProfile { kFlat, kRidge, kDome };

struct ObjectShape {
  std::string id;
  std::vector<Vec2> footprint;  // convex, counter-clockwise, meters
  double height = 0.0;
  TopProfile profile = TopProfile::kFlat;
  // ridge: slope angle in radians (ridge line along local x);
  // dome: curvature in 1/m, top = height - c * r^2.
  double profile_param = 0.0;
  std::array<float, 3> color{0.5f, 0.5f, 0.5f};

  /// Unscaled top surface height at a local footprint point. Ridge and dome
  /// tops never drop below 40% of the nominal height.
  double top(double lx, double ly) const;
};

/// Throws InvalidArgument unless the footprint is a convex CCW polygon with
/// positive area and the height is positive.
void validate_shape(const ObjectShape& shape);

struct SuctionParams {
  int cup_radius_px = 4;
  double seal_tolerance = 0.003;
  double seal_angle = 15.0 * kPi / 180.0;
};

struct GraspParams {
  double open_width = 0.06;
  double min_width = 0.004;
  int finger_width_px = 2;
  double clearance = 0.005;
};

struct SimConfig {
  double bin_width = 0.192;   // along x
  double bin_length = 0.192;  // along y
  double pixel_size = 0.003;
  std::array<double, 2> origin{0.0, 0.0};
  double max_stack_height = 0.15;
  int copies_per_shape = 2;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double color_jitter = 0.08;
  int max_placement_tries = 100;
  std::array<float, 3> floor_color{0.12f, 0.12f, 0.14f};
  SuctionParams suction;
  GraspParams grasp;

  int grid_width() const { return static_cast<int>(std::lround(bin_width / pixel_size)); }
  int grid_height() const { return static_cast<int>(std::lround(bin_length / pixel_size)); }
};

struct Instance {
  std::size_t shape = 0;  // index into Scene::shapes
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double scale = 1.0;
  double rest_z = 0.0;  // support height under the footprint when stamped
  std::array<float, 3> color{0.5f, 0.5f, 0.5f};

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Scene {
  SimConfig config;
  std::shared_ptr<const std::vector<ObjectShape>> shapes;
  std::vector<Instance> instances;  // in placement order
  std::vector<double> heightfield;  // H*W composed surface, row-major
  std::vector<int> owner;           // topmost instance per pixel, -1 for floor
  std::uint64_t seed = 0;
  Rng rng;

  int height() const { return config.grid_height(); }
  int width() const { return config.grid_width(); }
  const ObjectShape& shape_of(const Instance& inst) const { return (*shapes)[inst.shape]; }
};

Scene empty_scene(std::vector<ObjectShape> shapes, const SimConfig& config = {});

/// World-frame footprint of an instance.
std::vector<Vec2> world_outline(const Scene& scene, const Instance& inst);

/// Stamps `inst` on top of the current heightfield if its footprint lies
/// inside the bin, covers at least one pixel and the stack stays below
/// max_stack_height. rest_z is filled in. Returns false when rejected.
bool try_place(Scene& scene, Instance inst);

/// Rebuilds heightfield and owner from scratch by re-stamping every instance
/// in placement order; objects settle onto whatever support remains.
void recompose(Scene& scene);

Scene reset(std::span<const ObjectShape> object_set, int n_instances, std::uint64_t seed,
            const SimConfig& config = {});
Scene reset(std::shared_ptr<const std::vector<ObjectShape>> object_set, int n_instances,
            std::uint64_t seed, const SimConfig& config = {});

Heightmap render(const Scene& scene);

/// Unit normal from finite differences of depth (central inside, one-sided on
/// the border) in metric units: n ∝ (-dz/dx, -dz/dy, 1).
template <typename DepthAt>
std::array<float, 3> normal_from_depth(DepthAt&& depth, int height, int width, double pixel_size,
                                       int u, int v) {
  double gx = 0.0;
  double gy = 0.0;
  if (width > 1) {
    if (v == 0)
      gx = (double(depth(u, 1)) - double(depth(u, 0))) / pixel_size;
    else if (v == width - 1)
      gx = (double(depth(u, v)) - double(depth(u, v - 1))) / pixel_size;
    else
      gx = (double(depth(u, v + 1)) - double(depth(u, v - 1))) / (2.0 * pixel_size);
  }
  if (height > 1) {
    if (u == 0)
      gy = (double(depth(1, v)) - double(depth(0, v))) / pixel_size;
    else if (u == height - 1)
      gy = (double(depth(u, v)) - double(depth(u - 1, v))) / pixel_size;
    else
      gy = (double(depth(u + 1, v)) - double(depth(u - 1, v))) / (2.0 * pixel_size);
  }
  const double norm = std::sqrt(gx * gx + gy * gy + 1.0);
  return {static_cast<float>(-gx / norm), static_cast<float>(-gy / norm), static_cast<float>(1.0 / norm)};
}

struct NormalMap {
  int height = 0;
  int width = 0;
  std::vector<std::array<float, 3>> normals;  // row-major

  const std::array<float, 3>& at(int u, int v) const { return normals[static_cast<std::size_t>(u) * width + v]; }
};

NormalMap surface_normals(const Heightmap& map);

/// Angle between n and +z is at most max_angle.
inline bool is_flat(const std::array<float, 3>& n, double max_angle) {
  return double(n[2]) >= std::cos(max_angle);
}

inline double angle_to_vertical(const std::array<float, 3>& n) {
  return std::acos(std::clamp(double(n[2]), -1.0, 1.0));
}

struct SuctionCommand {
  std::array<double, 3> p{0.0, 0.0, 0.0};
};

struct GraspCommand {
  std::array<double, 3> p{0.0, 0.0, 0.0};
  double theta = 0.0;  // closing direction, CCW from +x
};

struct Outcome {
  int label = 0;
  std::optional<std::string> removed_object;
  std::string reason;  // "ok", "floor", "edge", "seal", "air", "too-thin", "too-wide", "collision"

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct Assessment {
  Outcome outcome;
  int target = -1;  // instance that would be removed
};

// Side-effect free success checks; execute_* applies the removal.
Assessment assess_suction(const Scene& scene, const SuctionCommand& cmd);
Assessment assess_grasp(const Scene& scene, const GraspCommand& cmd);

Outcome execute_suction(Scene& scene, const SuctionCommand& cmd);
Outcome execute_grasp(Scene& scene, const GraspCommand& cmd);

std::size_t remaining_objects(const Scene& scene);

bool inside_bin(const SimConfig& config, double x, double y);

/// Pixel (row, col) containing a world point inside the bin; points on the
/// far walls map to the last row/column.
std::array<int, 2> pixel_of(const SimConfig& config, double x, double y);

/// Chord of a convex CCW polygon along the line p + t*d: returns [t0, t1],
/// or nothing when the line misses the polygon.
std::optional<std::array<double, 2>> chord(std::span<const Vec2> polygon, Vec2 p, Vec2 d);

// Catalog / scene spec files. Sections: [bin] (width, length, pixel_size,
// max_stack_height, floor_color), [counts] (instances, copies_per_shape) and
// one [shape ID] per object (vertices, height, profile, color).
struct SceneSpec {
  SimConfig config;
  std::vector<ObjectShape> shapes;
  int instances = 10;
};

SceneSpec parse_scene_spec(const KeyValueFile& file, const SimConfig& base = {});
SceneSpec load_scene_spec(const std::filesystem::path& path, const SimConfig& base = {});

/// Shipped catalog for object set "train" or "test". The data directory can
/// be overridden with the AFFLAB_DATA environment variable.
std::filesystem::path catalog_path(std::string_view object_set);

}  // namespace afflab::sim
