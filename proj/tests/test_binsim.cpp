#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "afflab/binsim.hpp"
#include "afflab/error.hpp"
#include "test_util.hpp"

using namespace afflab;
using namespace afflab::sim;

namespace {

Scene scene_with(std::vector<ObjectShape> shapes) { return empty_scene(std::move(shapes)); }

// World coordinates of the centre of pixel (u, v).
std::array<double, 3> at_pixel(const Scene& s, int u, int v) {
  const int W = s.width();
  return {s.config.origin[0] + (v + 0.5) * s.config.pixel_size, s.config.origin[1] + (u + 0.5) * s.config.pixel_size,
          s.heightfield[static_cast<std::size_t>(u) * W + v]};
}

bool point_in_convex(const std::vector<Vec2>& poly, double x, double y) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    if ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) < 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("empty reset and the shipped catalogs") {
  const auto train = load_scene_spec(catalog_path("train"));
  const auto test = load_scene_spec(catalog_path("test"));
  CHECK(train.shapes.size() == 15);
  CHECK(test.shapes.size() == 5);
  for (const auto& s : train.shapes) CHECK_NOTHROW(validate_shape(s));

  const Scene empty = reset(train.shapes, 0, 1, train.config);
  CHECK(remaining_objects(empty) == 0);
  CHECK(std::all_of(empty.heightfield.begin(), empty.heightfield.end(), [](double h) { return h == 0.0; }));
}

TEST_CASE("two copies of each of five shapes") {
  const auto spec = load_scene_spec(catalog_path("test"));
  const Scene s = reset(spec.shapes, 10, 5, spec.config);
  REQUIRE(s.instances.size() == 10);
  std::map<std::string, int> counts;
  for (const auto& inst : s.instances) ++counts[s.shape_of(inst).id];
  CHECK(counts.size() == 5);
  for (const auto& [id, n] : counts) CHECK(n == 2);
  for (const auto& inst : s.instances) {
    CHECK(inst.scale >= 0.8);
    CHECK(inst.scale <= 1.2);
  }
}

TEST_CASE("reset is deterministic in the seed") {
  const auto spec = load_scene_spec(catalog_path("train"));
  const Scene a = reset(spec.shapes, 10, 42, spec.config), b = reset(spec.shapes, 10, 42, spec.config);
  const Scene c = reset(spec.shapes, 10, 43, spec.config);
  CHECK(a.instances == b.instances);
  CHECK(a.heightfield == b.heightfield);
  CHECK(render(a) == render(b));
  CHECK_FALSE(a.instances == c.instances);
}

TEST_CASE("heightfield is re-derivable from the instances") {
  const auto spec = load_scene_spec(catalog_path("train"));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = reset(spec.shapes, 10, seed, spec.config);
    Scene copy = s;
    recompose(copy);
    CHECK(copy.heightfield == s.heightfield);
    CHECK(copy.owner == s.owner);
    for (const auto& inst : s.instances) {
      const auto outline = world_outline(s, inst);
      bool hits_bin = false;
      for (const auto& p : outline) hits_bin |= inside_bin(s.config, p.x, p.y);
      CHECK(hits_bin);
    }
  }
}

TEST_CASE("placement fails loudly when the bin is overfull") {
  SimConfig cfg;
  cfg.max_stack_height = 0.05;
  const std::vector<ObjectShape> shapes{testutil::box("slab", 0.15, 0.15, 0.03)};
  try {
    reset(shapes, 20, 1, cfg);
    FAIL("expected BinOverfull");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBinOverfull);
  }
}

TEST_CASE("render of an empty scene") {
  const Scene s = scene_with({testutil::box("b", 0.03, 0.03, 0.02)});
  const Heightmap m = render(s);
  CHECK(m.height == 64);
  CHECK(m.width == 64);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    CHECK(m.valid[i] == 1);
    CHECK(m.depth[i] == 0.0f);
    CHECK(m.rgb[3 * i] == s.config.floor_color[0]);
  }
}

TEST_CASE("one flat box renders its height inside the footprint only") {
  Scene s = scene_with({testutil::box("b", 0.03, 0.042, 0.02)});
  REQUIRE(testutil::place(s, 0, 0.0901, 0.0813));
  const Heightmap m = render(s);
  const auto outline = world_outline(s, s.instances[0]);
  for (int u = 0; u < m.height; ++u)
    for (int v = 0; v < m.width; ++v) {
      const double x = (v + 0.5) * 0.003, y = (u + 0.5) * 0.003;
      const float expected = point_in_convex(outline, x, y) ? 0.02f : 0.0f;
      CHECK(m.depth[m.index(u, v)] == expected);
    }
}

TEST_CASE("stacked boxes add up where they overlap") {
  Scene s = scene_with({testutil::box("b", 0.04, 0.04, 0.02)});
  REQUIRE(testutil::place(s, 0, 0.080, 0.080));
  REQUIRE(testutil::place(s, 0, 0.100, 0.100));
  CHECK(s.instances[1].rest_z == doctest::Approx(0.02));
  const Heightmap m = render(s);
  const auto [u, v] = pixel_of(s.config, 0.090, 0.090);
  CHECK(m.depth[m.index(u, v)] == doctest::Approx(0.04));
  const auto [u2, v2] = pixel_of(s.config, 0.065, 0.065);
  CHECK(m.depth[m.index(u2, v2)] == doctest::Approx(0.02));
  const auto [u3, v3] = pixel_of(s.config, 0.115, 0.115);
  CHECK(m.depth[m.index(u3, v3)] == doctest::Approx(0.04));
}

TEST_CASE("surface normals: flat, 45 degree plane, step") {
  auto m = Heightmap::blank(8, 8, 0.003, {0, 0});
  std::fill(m.valid.begin(), m.valid.end(), 1);
  auto flat = surface_normals(m);
  CHECK(flat.at(4, 4)[2] == 1.0f);

  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) m.depth[m.index(u, v)] = static_cast<float>(v * 0.003);
  const auto slope = surface_normals(m);
  for (int v : {0, 3, 7}) {
    const auto n = slope.at(2, v);
    CHECK(n[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-5));
    CHECK(n[1] == doctest::Approx(0.0));
    CHECK(angle_to_vertical(n) == doctest::Approx(kPi / 4).epsilon(1e-5));
  }

  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) m.depth[m.index(u, v)] = v < 4 ? 0.0f : 0.03f;
  const auto step = surface_normals(m);
  // central difference across the 3 cm step spans two pixels
  CHECK(angle_to_vertical(step.at(3, 4)) == doctest::Approx(std::atan(0.03 / 0.006)).epsilon(1e-5));
  for (const auto& n : step.normals) CHECK(n[2] >= 0.0f);
}

TEST_CASE("suction outcomes: floor, flat top, sloped apex") {
  ObjectShape ridge = testutil::box("roof", 0.05, 0.05, 0.045);
  ridge.profile = TopProfile::kRidge;
  ridge.profile_param = kPi / 4;
  Scene s = scene_with({testutil::box("block", 0.045, 0.045, 0.03), ridge});
  REQUIRE(testutil::place(s, 0, 0.045, 0.045));
  REQUIRE(testutil::place(s, 1, 0.140, 0.140));

  const auto floor = execute_suction(s, {{0.180, 0.010, 0.0}});
  CHECK(floor.label == 0);
  CHECK(floor.reason == "floor");
  CHECK(remaining_objects(s) == 2);

  const auto apex = execute_suction(s, {{0.140, 0.140, 0.045}});
  CHECK(apex.label == 0);
  CHECK(apex.reason == "seal");

  const auto ok = execute_suction(s, {{0.045, 0.045, 0.03}});
  CHECK(ok.label == 1);
  CHECK(ok.removed_object == "block");
  CHECK(remaining_objects(s) == 1);
  const auto [u, v] = pixel_of(s.config, 0.045, 0.045);
  CHECK(s.heightfield[static_cast<std::size_t>(u) * s.width() + v] == 0.0);
}

TEST_CASE("grasp outcomes on a bar") {
  Scene s = scene_with({testutil::box("bar", 0.10, 0.02, 0.02)});
  REQUIRE(testutil::place(s, 0, 0.096, 0.096));
  const auto air = assess_grasp(s, {{0.02, 0.02, 0.0}, 0.0});
  CHECK(air.outcome.reason == "air");
  const auto along = assess_grasp(s, {{0.096, 0.096, 0.02}, 0.0});
  CHECK(along.outcome.label == 0);
  CHECK(along.outcome.reason == "too-wide");
  const auto across = assess_grasp(s, {{0.096, 0.096, 0.02}, kPi / 2});
  CHECK(across.outcome.label == 1);
  const auto flipped = assess_grasp(s, {{0.096, 0.096, 0.02}, 3 * kPi / 2});
  CHECK(flipped.outcome == across.outcome);

  const auto done = execute_grasp(s, {{0.096, 0.096, 0.02}, kPi / 2});
  CHECK(done.label == 1);
  CHECK(done.removed_object == "bar");
  CHECK(remaining_objects(s) == 0);
}

TEST_CASE("grasp collides with a tall neighbour in the finger path") {
  Scene s = scene_with({testutil::box("bar", 0.10, 0.02, 0.02), testutil::box("tower", 0.02, 0.02, 0.06)});
  REQUIRE(testutil::place(s, 0, 0.096, 0.096));
  REQUIRE(testutil::place(s, 1, 0.096, 0.096 + 0.022));
  const auto a = assess_grasp(s, {{0.070, 0.096, 0.02}, kPi / 2});
  CHECK(a.outcome.label == 1);
  const auto b = assess_grasp(s, {{0.096, 0.096 - 0.004, 0.02}, kPi / 2});
  CHECK(b.outcome.reason == "collision");
}

TEST_CASE("commands outside the bin are rejected") {
  Scene s = scene_with({testutil::box("b", 0.03, 0.03, 0.02)});
  for (const auto& p : {std::array<double, 3>{-0.001, 0.05, 0}, std::array<double, 3>{0.05, 0.2, 0},
                        std::array<double, 3>{std::nan(""), 0.05, 0}}) {
    try {
      execute_suction(s, {p});
      FAIL("expected OutOfWorkspace");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kOutOfWorkspace);
    }
    CHECK_THROWS_AS(execute_grasp(s, {p, 0.0}), Error);
  }
}

TEST_CASE("outcome label matches removal and objects are conserved") {
  const auto spec = load_scene_spec(catalog_path("train"));
  Rng rng(9);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Scene s = reset(spec.shapes, 10, seed, spec.config);
    for (int i = 0; i < 60 && remaining_objects(s) > 0; ++i) {
      const int u = static_cast<int>(uniform_index(rng, 64)), v = static_cast<int>(uniform_index(rng, 64));
      const auto p = at_pixel(s, u, v);
      const std::size_t before = remaining_objects(s);
      const Outcome o = i % 2 ? execute_grasp(s, {p, uniform_index(rng, 16) * kPi / 8})
                              : execute_suction(s, {p});
      CHECK((o.label == 1) == o.removed_object.has_value());
      CHECK(remaining_objects(s) == before - static_cast<std::size_t>(o.label));
    }
  }
}

TEST_CASE("same seed and command sequence give the same outcomes") {
  const auto spec = load_scene_spec(catalog_path("train"));
  auto run = [&] {
    Scene s = reset(spec.shapes, 10, 77, spec.config);
    Rng rng(3);
    std::vector<Outcome> log;
    for (int i = 0; i < 40; ++i) {
      const auto p = at_pixel(s, static_cast<int>(uniform_index(rng, 64)), static_cast<int>(uniform_index(rng, 64)));
      log.push_back(execute_grasp(s, {p, uniform_index(rng, 16) * kPi / 8}));
    }
    return log;
  };
  CHECK(run() == run());
}

TEST_CASE("seal failures coincide with non-flat pixels under the cup") {
  const auto spec = load_scene_spec(catalog_path("train"));
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Scene s = reset(spec.shapes, 10, seed, spec.config);
    const Heightmap m = render(s);
    const auto normals = surface_normals(m);
    const int r = s.config.suction.cup_radius_px;
    for (int u = r; u < 64 - r; ++u)
      for (int v = r; v < 64 - r; ++v) {
        const auto a = assess_suction(s, {at_pixel(s, u, v)});
        if (a.outcome.reason == "floor" || a.outcome.reason == "edge") continue;
        bool all_flat = true, level = true;
        for (int du = -r; du <= r; ++du)
          for (int dv = -r; dv <= r; ++dv) {
            if (du * du + dv * dv > r * r) continue;
            all_flat &= is_flat(normals.at(u + du, v + dv), s.config.suction.seal_angle);
            level &= std::abs(double(m.depth[m.index(u + du, v + dv)]) - m.depth[m.index(u, v)]) <=
                     s.config.suction.seal_tolerance;
          }
        CHECK((a.outcome.label == 1) == (all_flat && level));
        ++checked;
      }
  }
  CHECK(checked > 1000);
}

TEST_CASE("rotating the scene and the grasp by 90 degrees keeps the outcome") {
  const std::vector<ObjectShape> shapes{testutil::box("a", 0.05, 0.02, 0.02), testutil::box("b", 0.03, 0.03, 0.04),
                                        testutil::box("c", 0.07, 0.025, 0.015)};
  Scene s = empty_scene(shapes);
  REQUIRE(testutil::place(s, 0, 0.0615, 0.0735));
  REQUIRE(testutil::place(s, 1, 0.1065, 0.0825));
  REQUIRE(testutil::place(s, 2, 0.0945, 0.1245, kPi / 2));
  // (x, y) -> (c - (y - c), c + (x - c)) about the bin centre c.
  const double c = 0.096;
  Scene r = empty_scene(shapes);
  for (const auto& inst : s.instances) {
    Instance t = inst;
    t.x = c - (inst.y - c);
    t.y = c + (inst.x - c);
    t.yaw = inst.yaw + kPi / 2;
    REQUIRE(try_place(r, t));
  }
  int agree = 0, total = 0;
  for (int u = 0; u < 64; u += 2)
    for (int v = 0; v < 64; v += 2)
      for (int k = 0; k < 8; ++k) {
        const auto p = at_pixel(s, u, v);
        // pixel (u, v) goes to (v, 63 - u)
        const auto q = at_pixel(r, v, 63 - u);
        const auto a = assess_grasp(s, {p, k * kPi / 8});
        const auto b = assess_grasp(r, {q, k * kPi / 8 + kPi / 2});
        agree += a.outcome == b.outcome;
        ++total;
      }
  CHECK(agree == total);
}

TEST_CASE("chord matches dense sampling along the line") {
  Rng rng(5);
  const auto spec = load_scene_spec(catalog_path("train"));
  for (int trial = 0; trial < 200; ++trial) {
    const auto& shape = spec.shapes[uniform_index(rng, spec.shapes.size())];
    const Vec2 p{uniform(rng, -0.03, 0.03), uniform(rng, -0.03, 0.03)};
    const double a = uniform(rng, 0, 2 * kPi);
    const Vec2 d{std::cos(a), std::sin(a)};
    double lo = 1e9, hi = -1e9;
    for (int i = -20000; i <= 20000; ++i) {
      const double t = i * 5e-6;
      if (point_in_convex(shape.footprint, p.x + t * d.x, p.y + t * d.y)) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
    }
    const auto span = chord(shape.footprint, p, d);
    if (lo > hi) {
      CHECK_FALSE((span && (*span)[1] - (*span)[0] > 1e-5));
      continue;
    }
    REQUIRE(span);
    CHECK(std::abs((*span)[0] - lo) <= 1e-5);
    CHECK(std::abs((*span)[1] - hi) <= 1e-5);
  }
}

TEST_CASE("shape validation") {
  auto s = testutil::box("b", 0.02, 0.02, 0.01);
  CHECK_NOTHROW(validate_shape(s));
  auto cw = s;
  std::reverse(cw.footprint.begin(), cw.footprint.end());
  CHECK_THROWS_AS(validate_shape(cw), Error);
  auto flat = s;
  flat.height = 0.0;
  CHECK_THROWS_AS(validate_shape(flat), Error);
  auto concave = s;
  concave.footprint.insert(concave.footprint.begin() + 2, Vec2{0.0, 0.0});
  CHECK_THROWS_AS(validate_shape(concave), Error);
}

TEST_CASE("scene spec parsing") {
  std::istringstream in(
      "[bin]\nwidth = 0.096\nlength = 0.096\npixel_size = 0.003\n"
      "[counts]\ninstances = 3\n"
      "[shape wedge]\nvertices = -0.01 -0.01, 0.01 -0.01, 0.01 0.01, -0.01 0.01\nheight = 0.02\n"
      "profile = ridge 30\ncolor = 0.2 0.4 0.6\n");
  const auto spec = parse_scene_spec(parse_key_value(in));
  CHECK(spec.config.grid_width() == 32);
  CHECK(spec.instances == 3);
  REQUIRE(spec.shapes.size() == 1);
  CHECK(spec.shapes[0].profile == TopProfile::kRidge);
  CHECK(spec.shapes[0].profile_param == doctest::Approx(kPi / 6));

  std::istringstream bad("[shape x]\nvertices = 0 0, 1\nheight = 0.02\n");
  CHECK_THROWS_AS(parse_scene_spec(parse_key_value(bad)), Error);
}
