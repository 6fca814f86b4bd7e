#include "afflab/binsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <utility>

#include "afflab/error.hpp"

#ifndef AFFLAB_DATA_DIR
#define AFFLAB_DATA_DIR "data"
#endif

namespace afflab::sim {

namespace {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

bool inside_convex(std::span<const Vec2> poly, Vec2 c) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    if (cross({b.x - a.x, b.y - a.y}, {c.x - a.x, c.y - a.y}) < 0.0) return false;
  }
  return true;
}

struct Stamp {
  std::size_t index;
  double top;  // scaled surface height above the rest plane
};

std::vector<Stamp> footprint_pixels(const Scene& scene, const Instance& inst) {
  const SimConfig& cfg = scene.config;
  const ObjectShape& shape = scene.shape_of(inst);
  const auto outline = world_outline(scene, inst);
  double min_x = outline[0].x, max_x = outline[0].x, min_y = outline[0].y, max_y = outline[0].y;
  for (const Vec2& p : outline) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double ps = cfg.pixel_size;
  const int H = scene.height(), W = scene.width();
  const int v0 = std::max(0, static_cast<int>(std::floor((min_x - cfg.origin[0]) / ps)));
  const int v1 = std::min(W - 1, static_cast<int>(std::floor((max_x - cfg.origin[0]) / ps)));
  const int u0 = std::max(0, static_cast<int>(std::floor((min_y - cfg.origin[1]) / ps)));
  const int u1 = std::min(H - 1, static_cast<int>(std::floor((max_y - cfg.origin[1]) / ps)));
  const double c = std::cos(inst.yaw), s = std::sin(inst.yaw);
  std::vector<Stamp> out;
  for (int u = u0; u <= u1; ++u) {
    for (int v = v0; v <= v1; ++v) {
      const Vec2 q{cfg.origin[0] + (v + 0.5) * ps, cfg.origin[1] + (u + 0.5) * ps};
      if (!inside_convex(outline, q)) continue;
      const double dx = (q.x - inst.x) / inst.scale, dy = (q.y - inst.y) / inst.scale;
      const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
      out.push_back({static_cast<std::size_t>(u) * W + v, inst.scale * shape.top(lx, ly)});
    }
  }
  return out;
}

// Returns false (and leaves the scene untouched) when the placement is rejected.
bool stamp(Scene& scene, Instance& inst, int owner_id, bool enforce_limits) {
  if (enforce_limits) {
    for (const Vec2& p : world_outline(scene, inst))
      if (!inside_bin(scene.config, p.x, p.y)) return false;
  }
  const auto pixels = footprint_pixels(scene, inst);
  if (pixels.empty()) return false;
  double rest = 0.0;
  for (const Stamp& px : pixels) rest = std::max(rest, scene.heightfield[px.index]);
  if (enforce_limits && rest + inst.scale * scene.shape_of(inst).height > scene.config.max_stack_height)
    return false;
  inst.rest_z = rest;
  for (const Stamp& px : pixels) {
    scene.heightfield[px.index] = rest + px.top;
    scene.owner[px.index] = owner_id;
  }
  return true;
}

Vec2 direction(double theta) {
  // Exact axes for multiples of a quarter turn keep lattice-aligned grasps
  // free of rounding noise.
  const double quarter = theta / (kPi / 2.0);
  const double r = std::round(quarter);
  if (std::abs(quarter - r) < 1e-12) {
    switch (((static_cast<long long>(r) % 4) + 4) % 4) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  return {std::cos(theta), std::sin(theta)};
}

Assessment fail(const char* reason) { return {{0, std::nullopt, reason}, -1}; }

void check_target(const Scene& scene, const std::array<double, 3>& p) {
  if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
    throw Error(ErrorCode::kOutOfWorkspace, "non-finite command position");
  if (!inside_bin(scene.config, p[0], p[1]))
    throw Error(ErrorCode::kOutOfWorkspace, "command position outside the bin");
}

}  // namespace

double ObjectShape::top(double lx, double ly) const {
  switch (profile) {
    case TopProfile::kFlat:
      return height;
    case TopProfile::kRidge:
      return std::max(height - std::tan(profile_param) * std::abs(ly), 0.4 * height);
    case TopProfile::kDome:
      return std::max(height - profile_param * (lx * lx + ly * ly), 0.4 * height);
  }
  return height;
}

void validate_shape(const ObjectShape& shape) {
  const auto& fp = shape.footprint;
  if (fp.size() < 3) throw Error(ErrorCode::kInvalidArgument, "shape " + shape.id + ": fewer than 3 vertices");
  if (!(shape.height > 0.0) || !std::isfinite(shape.height))
    throw Error(ErrorCode::kInvalidArgument, "shape " + shape.id + ": height must be positive");
  double area2 = 0.0;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const Vec2 a = fp[i], b = fp[(i + 1) % fp.size()], c = fp[(i + 2) % fp.size()];
    if (!std::isfinite(a.x) || !std::isfinite(a.y))
      throw Error(ErrorCode::kInvalidArgument, "shape " + shape.id + ": non-finite vertex");
    if (cross({b.x - a.x, b.y - a.y}, {c.x - b.x, c.y - b.y}) < 0.0)
      throw Error(ErrorCode::kInvalidArgument, "shape " + shape.id + ": footprint not convex CCW");
    area2 += cross(a, b);
  }
  if (!(area2 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "shape " + shape.id + ": degenerate footprint");
  if (shape.profile != TopProfile::kFlat && !(shape.profile_param >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "shape " + shape.id + ": bad profile parameter");
}

Scene empty_scene(std::vector<ObjectShape> shapes, const SimConfig& config) {
  for (const auto& s : shapes) validate_shape(s);
  if (!(config.pixel_size > 0.0) || config.grid_width() < 1 || config.grid_height() < 1)
    throw Error(ErrorCode::kInvalidArgument, "bin must span at least one pixel");
  Scene scene;
  scene.config = config;
  scene.shapes = std::make_shared<const std::vector<ObjectShape>>(std::move(shapes));
  const auto n = static_cast<std::size_t>(config.grid_width()) * config.grid_height();
  scene.heightfield.assign(n, 0.0);
  scene.owner.assign(n, -1);
  return scene;
}

std::vector<Vec2> world_outline(const Scene& scene, const Instance& inst) {
  const ObjectShape& shape = scene.shape_of(inst);
  const double c = std::cos(inst.yaw), s = std::sin(inst.yaw);
  std::vector<Vec2> out;
  out.reserve(shape.footprint.size());
  for (const Vec2& p : shape.footprint) {
    const double lx = inst.scale * p.x, ly = inst.scale * p.y;
    out.push_back({inst.x + c * lx - s * ly, inst.y + s * lx + c * ly});
  }
  return out;
}

bool try_place(Scene& scene, Instance inst) {
  if (inst.shape >= scene.shapes->size()) throw Error(ErrorCode::kInvalidArgument, "unknown shape index");
  if (!stamp(scene, inst, static_cast<int>(scene.instances.size()), true)) return false;
  scene.instances.push_back(inst);
  return true;
}

void recompose(Scene& scene) {
  std::fill(scene.heightfield.begin(), scene.heightfield.end(), 0.0);
  std::fill(scene.owner.begin(), scene.owner.end(), -1);
  for (std::size_t i = 0; i < scene.instances.size(); ++i) stamp(scene, scene.instances[i], static_cast<int>(i), false);
}

Scene reset(std::span<const ObjectShape> object_set, int n_instances, std::uint64_t seed, const SimConfig& config) {
  return reset(std::make_shared<const std::vector<ObjectShape>>(object_set.begin(), object_set.end()), n_instances,
               seed, config);
}

Scene reset(std::shared_ptr<const std::vector<ObjectShape>> object_set, int n_instances, std::uint64_t seed,
            const SimConfig& config) {
  if (n_instances < 0) throw Error(ErrorCode::kInvalidArgument, "n_instances must be >= 0");
  if (n_instances > 0 && object_set->empty()) throw Error(ErrorCode::kInvalidArgument, "empty object set");
  Scene scene = empty_scene({}, config);
  for (const auto& s : *object_set) validate_shape(s);
  scene.shapes = std::move(object_set);
  scene.seed = seed;
  scene.rng.seed(seed);
  Rng& rng = scene.rng;

  const std::size_t n_shapes = scene.shapes->size();
  std::vector<std::size_t> order(n_shapes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n_shapes; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const int copies = std::max(1, config.copies_per_shape);

  for (int i = 0; i < n_instances; ++i) {
    const std::size_t shape_index = order[static_cast<std::size_t>(i / copies) % n_shapes];
    const ObjectShape& shape = (*scene.shapes)[shape_index];
    double radius = 0.0;
    for (const Vec2& p : shape.footprint) radius = std::max(radius, std::hypot(p.x, p.y));
    bool placed = false;
    for (int attempt = 0; attempt < config.max_placement_tries && !placed; ++attempt) {
      Instance inst;
      inst.shape = shape_index;
      inst.scale = uniform(rng, config.scale_min, config.scale_max);
      inst.yaw = uniform(rng, 0.0, 2.0 * kPi);
      const double margin = radius * inst.scale;
      const double ux = uniform01(rng), uy = uniform01(rng);
      for (int c = 0; c < 3; ++c) {
        const double jitter = uniform(rng, -config.color_jitter, config.color_jitter);
        inst.color[c] = static_cast<float>(std::clamp(shape.color[c] + jitter, 0.0, 1.0));
      }
      const double span_x = config.bin_width - 2.0 * margin, span_y = config.bin_length - 2.0 * margin;
      if (span_x < 0.0 || span_y < 0.0) continue;
      inst.x = config.origin[0] + margin + ux * span_x;
      inst.y = config.origin[1] + margin + uy * span_y;
      placed = try_place(scene, inst);
    }
    if (!placed)
      throw Error(ErrorCode::kBinOverfull, "could not place instance " + std::to_string(i) + " (" + shape.id +
                                               ") after " + std::to_string(config.max_placement_tries) + " tries");
  }
  return scene;
}

Heightmap render(const Scene& scene) {
  Heightmap map = Heightmap::blank(scene.height(), scene.width(), scene.config.pixel_size, scene.config.origin);
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    map.depth[i] = static_cast<float>(scene.heightfield[i]);
    map.valid[i] = 1;
    const int o = scene.owner[i];
    const auto& color = o >= 0 ? scene.instances[static_cast<std::size_t>(o)].color : scene.config.floor_color;
    for (int c = 0; c < 3; ++c) map.rgb[3 * i + c] = color[c];
  }
  return map;
}

NormalMap surface_normals(const Heightmap& map) {
  NormalMap out;
  out.height = map.height;
  out.width = map.width;
  out.normals.resize(map.pixel_count());
  auto depth = [&](int u, int v) { return map.depth[map.index(u, v)]; };
  for (int u = 0; u < map.height; ++u)
    for (int v = 0; v < map.width; ++v)
      out.normals[map.index(u, v)] = normal_from_depth(depth, map.height, map.width, map.pixel_size, u, v);
  return out;
}

bool inside_bin(const SimConfig& config, double x, double y) {
  return x >= config.origin[0] && x <= config.origin[0] + config.bin_width && y >= config.origin[1] &&
         y <= config.origin[1] + config.bin_length;
}

std::array<int, 2> pixel_of(const SimConfig& config, double x, double y) {
  const int v = static_cast<int>(std::floor((x - config.origin[0]) / config.pixel_size));
  const int u = static_cast<int>(std::floor((y - config.origin[1]) / config.pixel_size));
  return {std::clamp(u, 0, config.grid_height() - 1), std::clamp(v, 0, config.grid_width() - 1)};
}

std::optional<std::array<double, 2>> chord(std::span<const Vec2> polygon, Vec2 p, Vec2 d) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = polygon[i], b = polygon[(i + 1) % n];
    const Vec2 normal{b.y - a.y, -(b.x - a.x)};  // outward for CCW order
    const double offset = normal.x * (p.x - a.x) + normal.y * (p.y - a.y);
    const double rate = normal.x * d.x + normal.y * d.y;
    if (rate == 0.0) {
      if (offset > 0.0) return std::nullopt;
      continue;
    }
    const double t = -offset / rate;
    if (rate > 0.0)
      t1 = std::min(t1, t);
    else
      t0 = std::max(t0, t);
  }
  if (t0 > t1) return std::nullopt;
  return std::array<double, 2>{t0, t1};
}

Assessment assess_suction(const Scene& scene, const SuctionCommand& cmd) {
  check_target(scene, cmd.p);
  const SimConfig& cfg = scene.config;
  const int H = scene.height(), W = scene.width();
  const auto [u, v] = pixel_of(cfg, cmd.p[0], cmd.p[1]);
  const auto at = [&](int uu, int vv) { return static_cast<std::size_t>(uu) * W + vv; };
  const int target = scene.owner[at(u, v)];
  if (target < 0) return fail("floor");

  const int r = cfg.suction.cup_radius_px;
  std::vector<std::array<int, 2>> disk;
  for (int du = -r; du <= r; ++du)
    for (int dv = -r; dv <= r; ++dv)
      if (du * du + dv * dv <= r * r) disk.push_back({u + du, v + dv});

  for (const auto& [uu, vv] : disk) {
    if (uu < 0 || vv < 0 || uu >= H || vv >= W) return fail("edge");
    if (scene.owner[at(uu, vv)] != target) return fail("edge");
  }
  // Seal checks run on the float depth the camera would report.
  const auto depth = [&](int uu, int vv) { return static_cast<float>(scene.heightfield[at(uu, vv)]); };
  const double center = depth(u, v);
  for (const auto& [uu, vv] : disk)
    if (std::abs(double(depth(uu, vv)) - center) > cfg.suction.seal_tolerance) return fail("seal");
  for (const auto& [uu, vv] : disk)
    if (!is_flat(normal_from_depth(depth, H, W, cfg.pixel_size, uu, vv), cfg.suction.seal_angle)) return fail("seal");

  const auto& inst = scene.instances[static_cast<std::size_t>(target)];
  return {{1, scene.shape_of(inst).id, "ok"}, target};
}

Assessment assess_grasp(const Scene& scene, const GraspCommand& cmd) {
  check_target(scene, cmd.p);
  if (!std::isfinite(cmd.theta)) throw Error(ErrorCode::kInvalidArgument, "non-finite grasp angle");
  const SimConfig& cfg = scene.config;
  const GraspParams& gp = cfg.grasp;
  const int W = scene.width();
  const auto [u, v] = pixel_of(cfg, cmd.p[0], cmd.p[1]);
  const int target = scene.owner[static_cast<std::size_t>(u) * W + v];
  if (target < 0) return fail("air");

  const auto& inst = scene.instances[static_cast<std::size_t>(target)];
  const auto outline = world_outline(scene, inst);
  const Vec2 p{cmd.p[0], cmd.p[1]};
  const Vec2 d = direction(cmd.theta);
  const auto span = chord(outline, p, d);
  if (!span) return fail("air");
  const auto [t0, t1] = *span;
  if (t1 - t0 < gp.min_width) return fail("too-thin");
  if (2.0 * std::max(std::abs(t0), std::abs(t1)) > gp.open_width) return fail("too-wide");

  // Each finger sweeps from the fully open position in to the object's
  // boundary; sample the swept strip at half-pixel spacing (cell midpoints).
  const Vec2 side{-d.y, d.x};
  const double half_open = gp.open_width / 2.0;
  const double finger = gp.finger_width_px * cfg.pixel_size;
  const int n_side = std::max(1, 2 * gp.finger_width_px);
  const double limit = cmd.p[2] + gp.clearance;
  for (const double sign : {1.0, -1.0}) {
    const double start = sign > 0.0 ? t1 : -t0;
    const double stroke = half_open - start;
    const int n_along = std::max(1, static_cast<int>(std::ceil(stroke / (cfg.pixel_size / 2.0))));
    for (int i = 0; i < n_along; ++i) {
      const double t = sign * (start + (i + 0.5) * stroke / n_along);
      for (int j = 0; j < n_side; ++j) {
        const double s = (j + 0.5) * finger / n_side - finger / 2.0;
        const double qx = p.x + t * d.x + s * side.x;
        const double qy = p.y + t * d.y + s * side.y;
        if (!inside_bin(cfg, qx, qy)) return fail("collision");
        const auto [qu, qv] = pixel_of(cfg, qx, qy);
        const std::size_t k = static_cast<std::size_t>(qu) * W + qv;
        const int o = scene.owner[k];
        if (o >= 0 && o != target && scene.heightfield[k] > limit) return fail("collision");
      }
    }
  }
  return {{1, scene.shape_of(inst).id, "ok"}, target};
}

namespace {

Outcome apply(Scene& scene, Assessment a) {
  if (a.outcome.label == 1) {
    scene.instances.erase(scene.instances.begin() + a.target);
    recompose(scene);
  }
  return std::move(a.outcome);
}

}  // namespace

Outcome execute_suction(Scene& scene, const SuctionCommand& cmd) { return apply(scene, assess_suction(scene, cmd)); }

Outcome execute_grasp(Scene& scene, const GraspCommand& cmd) { return apply(scene, assess_grasp(scene, cmd)); }

std::size_t remaining_objects(const Scene& scene) { return scene.instances.size(); }

namespace {

std::array<float, 3> parse_color(const std::string& text, const std::string& what) {
  const auto values = parse_doubles(text, what);
  if (values.size() != 3) throw Error(ErrorCode::kInvalidArgument, what + ": expected 3 color components");
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) {
    if (values[c] < 0.0 || values[c] > 1.0) throw Error(ErrorCode::kInvalidArgument, what + ": color outside [0,1]");
    out[c] = static_cast<float>(values[c]);
  }
  return out;
}

ObjectShape parse_shape(const KeyValueSection& s) {
  ObjectShape shape;
  shape.id = s.arg;
  if (shape.id.empty()) throw Error(ErrorCode::kInvalidArgument, "[shape] section without an id");
  const std::string where = "shape " + shape.id;
  const auto vertices = s.get("vertices");
  const auto height = s.get("height");
  if (!vertices || !height) throw Error(ErrorCode::kInvalidArgument, where + ": vertices and height are required");
  const auto coords = parse_doubles(*vertices, where + " vertices");
  if (coords.size() % 2 != 0) throw Error(ErrorCode::kInvalidArgument, where + ": odd number of coordinates");
  for (std::size_t i = 0; i < coords.size(); i += 2) shape.footprint.push_back({coords[i], coords[i + 1]});
  shape.height = parse_double(*height, where + " height");
  if (const auto profile = s.get("profile")) {
    const auto space = profile->find(' ');
    const std::string kind = profile->substr(0, space);
    const std::string arg = space == std::string::npos ? "" : profile->substr(space + 1);
    if (kind == "flat") {
      shape.profile = TopProfile::kFlat;
    } else if (kind == "ridge") {
      shape.profile = TopProfile::kRidge;
      shape.profile_param = parse_double(arg, where + " ridge slope") * kPi / 180.0;
    } else if (kind == "dome") {
      shape.profile = TopProfile::kDome;
      shape.profile_param = parse_double(arg, where + " dome curvature");
    } else {
      throw Error(ErrorCode::kInvalidArgument, where + ": unknown profile '" + kind + "'");
    }
  }
  if (const auto color = s.get("color")) shape.color = parse_color(*color, where + " color");
  validate_shape(shape);
  return shape;
}

template <typename T>
void read_into(const KeyValueSection* s, const char* key, T& out) {
  if (!s) return;
  const auto value = s->get(key);
  if (!value) return;
  if constexpr (std::is_integral_v<T>)
    out = static_cast<T>(parse_int(*value, key));
  else
    out = parse_double(*value, key);
}

}  // namespace

SceneSpec parse_scene_spec(const KeyValueFile& file, const SimConfig& base) {
  SceneSpec spec;
  spec.config = base;
  SimConfig& cfg = spec.config;
  const KeyValueSection* bin = file.find("bin");
  read_into(bin, "width", cfg.bin_width);
  read_into(bin, "length", cfg.bin_length);
  read_into(bin, "pixel_size", cfg.pixel_size);
  read_into(bin, "max_stack_height", cfg.max_stack_height);
  read_into(bin, "scale_min", cfg.scale_min);
  read_into(bin, "scale_max", cfg.scale_max);
  read_into(bin, "color_jitter", cfg.color_jitter);
  if (bin) {
    if (const auto c = bin->get("floor_color")) cfg.floor_color = parse_color(*c, "floor_color");
    if (const auto o = bin->get("origin")) {
      const auto xy = parse_doubles(*o, "origin");
      if (xy.size() != 2) throw Error(ErrorCode::kInvalidArgument, "origin needs two values");
      cfg.origin = {xy[0], xy[1]};
    }
  }
  const KeyValueSection* counts = file.find("counts");
  read_into(counts, "instances", spec.instances);
  read_into(counts, "copies_per_shape", cfg.copies_per_shape);
  const KeyValueSection* suction = file.find("suction");
  read_into(suction, "cup_radius_px", cfg.suction.cup_radius_px);
  read_into(suction, "seal_tolerance", cfg.suction.seal_tolerance);
  if (suction && suction->get("seal_angle_deg"))
    cfg.suction.seal_angle = parse_double(*suction->get("seal_angle_deg"), "seal_angle_deg") * kPi / 180.0;
  const KeyValueSection* grasp = file.find("grasp");
  read_into(grasp, "open_width", cfg.grasp.open_width);
  read_into(grasp, "min_width", cfg.grasp.min_width);
  read_into(grasp, "finger_width_px", cfg.grasp.finger_width_px);
  read_into(grasp, "clearance", cfg.grasp.clearance);

  if (!(cfg.pixel_size > 0.0) || !(cfg.bin_width > 0.0) || !(cfg.bin_length > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "bin size and pixel_size must be positive");
  if (!(cfg.scale_min > 0.0) || cfg.scale_max < cfg.scale_min)
    throw Error(ErrorCode::kInvalidArgument, "bad scale range");
  if (spec.instances < 0) throw Error(ErrorCode::kInvalidArgument, "instances must be >= 0");

  for (const auto& s : file.sections)
    if (s.name == "shape") spec.shapes.push_back(parse_shape(s));
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path, const SimConfig& base) {
  return parse_scene_spec(load_key_value(path), base);
}

std::filesystem::path catalog_path(std::string_view object_set) {
  std::filesystem::path dir = AFFLAB_DATA_DIR;
  if (const char* env = std::getenv("AFFLAB_DATA"); env && *env) dir = env;
  return dir / ("catalog_" + std::string(object_set) + ".txt");
}

}  // namespace afflab::sim
