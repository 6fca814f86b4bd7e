#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "afflab/error.hpp"
#include "afflab/vision_labels.hpp"
#include "reference/reference_vision.hpp"
#include "test_util.hpp"

using namespace afflab;

namespace {

GrayImage random_gray(int h, int w, Rng& rng) {
  GrayImage g{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  for (double& p : g.pixels) p = uniform01(rng);
  return g;
}

GrayImage image_from(int h, int w, auto&& f) {
  GrayImage g{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) g.pixels[static_cast<std::size_t>(u) * w + v] = f(u, v);
  return g;
}

std::size_t count(const LabelMap& m) { return std::count(m.labels.begin(), m.labels.end(), 1); }

LabelMap dilate(const LabelMap& m, int r) {
  LabelMap out = m;
  for (int u = 0; u < m.height; ++u)
    for (int v = 0; v < m.width; ++v) {
      std::uint8_t any = 0;
      for (int du = -r; du <= r; ++du)
        for (int dv = -r; dv <= r; ++dv) {
          const int uu = u + du, vv = v + dv;
          if (uu >= 0 && vv >= 0 && uu < m.height && vv < m.width) any |= m.at(uu, vv);
        }
      out.labels[static_cast<std::size_t>(u) * m.width + v] = any;
    }
  return out;
}

bool subset(const LabelMap& a, const LabelMap& b) {
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    if (a.labels[i] && !b.labels[i]) return false;
  return true;
}

int components(const LabelMap& m) {
  std::vector<int> seen(m.labels.size(), 0);
  int n = 0;
  for (std::size_t s = 0; s < m.labels.size(); ++s) {
    if (!m.labels[s] || seen[s]) continue;
    ++n;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      const int u = static_cast<int>(i) / m.width, v = static_cast<int>(i) % m.width;
      for (const auto& [du, dv] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        const int uu = u + du, vv = v + dv;
        if (uu < 0 || vv < 0 || uu >= m.height || vv >= m.width) continue;
        const std::size_t j = static_cast<std::size_t>(uu) * m.width + vv;
        if (m.labels[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return n;
}

}  // namespace

TEST_CASE("gaussian kernel is normalized and symmetric") {
  const auto k = gaussian_kernel(1.0);
  CHECK(k.size() == 7);
  double sum = 0.0;
  for (double w : k) sum += w;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(k[0] == k[6]);
  CHECK_THROWS_AS(gaussian_kernel(0.0), Error);
}

TEST_CASE("canny: constant image, vertical step, argument checks") {
  const auto flat = image_from(12, 12, [](int, int) { return 0.4; });
  CHECK(count(canny_edges(flat, 1.0, 0.1, 0.2)) == 0);

  const auto step = image_from(16, 16, [](int, int v) { return v < 8 ? 0.0 : 1.0; });
  const auto e = canny_edges(step, 1.0, 0.1, 0.2);
  int column = -1;
  for (int v = 0; v < 16; ++v) {
    int n = 0;
    for (int u = 0; u < 16; ++u) n += e.at(u, v);
    if (n == 0) continue;
    CHECK(n == 16);
    CHECK(column == -1);
    column = v;
  }
  CHECK((column == 7 || column == 8));

  CHECK_THROWS_AS(canny_edges(image_from(2, 5, [](int, int) { return 0.0; }), 1.0, 0.1, 0.2), Error);
  try {
    canny_edges(image_from(5, 2, [](int, int) { return 0.0; }), 1.0, 0.1, 0.2);
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::kImageTooSmall);
  }
  CHECK_THROWS_AS(canny_edges(step, 1.0, 0.3, 0.2), Error);
}

TEST_CASE("harris: constant, straight edge, white square") {
  CHECK(count(harris_corners(image_from(12, 12, [](int, int) { return 0.7; }), 1.0, 0.05, 0.01)) == 0);
  CHECK(count(harris_corners(image_from(16, 16, [](int, int v) { return v < 8 ? 0.0 : 1.0; }), 1.0, 0.05, 0.01)) ==
        0);

  const auto square = image_from(24, 24, [](int u, int v) { return (u >= 8 && u < 16 && v >= 8 && v < 16) ? 1.0 : 0.0; });
  const auto c = harris_corners(square, 1.0, 0.05, 0.01);
  const std::array<std::array<double, 2>, 4> corners{{{7.5, 7.5}, {7.5, 15.5}, {15.5, 7.5}, {15.5, 15.5}}};
  std::array<int, 4> near{};
  for (int u = 0; u < 24; ++u)
    for (int v = 0; v < 24; ++v) {
      if (!c.at(u, v)) continue;
      bool close = false;
      for (int k = 0; k < 4; ++k)
        if (std::abs(u - corners[k][0]) <= 2.5 && std::abs(v - corners[k][1]) <= 2.5) {
          close = true;
          ++near[k];
        }
      CHECK(close);
    }
  for (int n : near) CHECK(n >= 1);
  CHECK_THROWS_AS(harris_corners(square, 1.0, 0.3, 0.01), Error);
  CHECK_THROWS_AS(harris_corners(square, 1.0, 0.05, 0.0), Error);
}

TEST_CASE("canny and harris equal the brute-force references on random images") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const GrayImage g = random_gray(16, 16, rng);
    const reference::Image r{16, 16, g.pixels};
    CHECK(canny_edges(g, 1.0, 0.1, 0.2).labels == reference::canny(r, 1.0, 0.1, 0.2));
    CHECK(harris_corners(g, 1.0, 0.05, 0.01).labels == reference::harris(r, 1.0, 0.05, 0.01));
  }
}

TEST_CASE("object centers") {
  sim::Scene empty = sim::empty_scene({testutil::box("b", 0.02, 0.02, 0.02)});
  CHECK(count(object_centers(empty, 3)) == 0);

  sim::Scene one = empty;
  REQUIRE(testutil::place(one, 0, 0.05, 0.05));
  const auto c = object_centers(one, 3);
  CHECK(c.at(16, 16) == 1);
  CHECK(count(c) == 29);  // lattice points with du^2 + dv^2 <= 9
  CHECK(c.at(16, 19) == 1);
  CHECK(c.at(16, 20) == 0);

  const auto spec = sim::load_scene_spec(sim::catalog_path("train"));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sim::reset(spec.shapes, 10, seed, spec.config);
    CHECK(components(object_centers(s, 3)) <= 10);
  }
  CHECK_THROWS_AS(object_centers(one, 0), Error);
}

TEST_CASE("foreground mask") {
  sim::Scene s = sim::empty_scene({testutil::box("b", 0.03, 0.03, 0.02)});
  CHECK(count(foreground_mask(sim::render(s), 0.005)) == 0);
  REQUIRE(testutil::place(s, 0, 0.07, 0.09));
  const auto m = sim::render(s);
  const auto fg = foreground_mask(m, 0.005);
  for (std::size_t i = 0; i < fg.labels.size(); ++i) CHECK(fg.labels[i] == (s.owner[i] >= 0 ? 1 : 0));
  CHECK(count(foreground_mask(m, 0.05)) == 0);
}

TEST_CASE("flat surface labels") {
  sim::ObjectShape roof = testutil::box("roof", 0.05, 0.05, 0.045);
  roof.profile = sim::TopProfile::kRidge;
  roof.profile_param = sim::kPi / 4;
  sim::Scene s = sim::empty_scene({testutil::box("block", 0.045, 0.045, 0.03), roof});
  CHECK(count(flat_surface(sim::surface_normals(sim::render(s)), foreground_mask(sim::render(s), 0.005),
                           15.0 * sim::kPi / 180.0)) == 0);
  REQUIRE(testutil::place(s, 0, 0.045, 0.045));
  REQUIRE(testutil::place(s, 1, 0.140, 0.140));
  const auto m = sim::render(s);
  const auto fg = foreground_mask(m, 0.005);
  const auto flat = flat_surface(sim::surface_normals(m), fg, 15.0 * sim::kPi / 180.0);
  // box interior flat, box rim not
  const auto [u, v] = sim::pixel_of(s.config, 0.045, 0.045);
  CHECK(flat.at(u, v) == 1);
  int rim_left = v;
  while (fg.at(u, rim_left - 1)) --rim_left;
  CHECK(flat.at(u, rim_left) == 0);
  CHECK(flat.at(u, rim_left + 1) == 1);
  // ridge slopes (away from the ridge line) are never flat
  const auto [ru, rv] = sim::pixel_of(s.config, 0.140, 0.140);
  for (int du : {-6, -4, -3, 3, 4, 6}) CHECK(flat.at(ru + du, rv) == 0);
  CHECK(subset(flat, fg));
  CHECK_THROWS_AS(flat_surface(sim::surface_normals(m), fg, 0.0), Error);
}

TEST_CASE("label invariants hold on generated scenes") {
  for (const char* set : {"train", "test"}) {
    const auto spec = sim::load_scene_spec(sim::catalog_path(set));
    int corner_ok = 0, edge_ok = 0;
    const int n = 100;
    for (int i = 0; i < n; ++i) {
      const auto scene = sim::reset(spec.shapes, spec.instances, 5000 + i, spec.config);
      const auto map = sim::render(scene);
      const auto labels = compute_labels(scene, map, {});
      for (std::size_t t = 0; t < labels.size(); ++t) {
        CHECK(labels[t].task == kVisionTasks[t]);
        CHECK(labels[t].height == map.height);
        CHECK(labels[t].width == map.width);
        CHECK(std::all_of(labels[t].labels.begin(), labels[t].labels.end(), [](auto b) { return b <= 1; }));
      }
      const auto& edge = labels[0];
      const auto& corner = labels[1];
      const auto& fg = labels[3];
      const auto& flat = labels[4];
      CHECK(subset(flat, fg));
      edge_ok += subset(edge, dilate(fg, 1));
      corner_ok += subset(corner, dilate(edge, 2));
    }
    // A floor gap of 2-4 px between two objects can blur into one gradient
    // ridge whose maximum sits mid-gap, and isolated single-pixel floor holes
    // can give a Harris peak without a surviving Canny edge, so these two are
    // checked as rates.
    CHECK(edge_ok >= n * 98 / 100);
    CHECK(corner_ok >= n * 98 / 100);
  }
}

TEST_CASE("dataset: empty object set, determinism, file round trip") {
  const auto empty = build_dataset({}, 1, 3, {}, 0);
  REQUIRE(empty.entries.size() == 1);
  for (const auto& l : empty.entries[0].labels) CHECK(count(l) == 0);

  const auto spec = sim::load_scene_spec(sim::catalog_path("train"));
  const auto a = build_dataset(spec.shapes, 4, 10, {}, spec.instances, spec.config);
  const auto b = build_dataset(spec.shapes, 4, 10, {}, spec.instances, spec.config);
  const auto scene2 = sim::reset(spec.shapes, spec.instances, 12, spec.config);
  CHECK(a.entries[2].map == sim::render(scene2));

  testutil::TempDir d1("ds1"), d2("ds2");
  save_dataset(a, d1.path);
  save_dataset(b, d2.path);
  std::size_t files = 0;
  for (const auto& f : std::filesystem::directory_iterator(d1.path)) {
    ++files;
    std::ifstream x(f.path(), std::ios::binary), y(d2.path / f.path().filename(), std::ios::binary);
    const std::string bx((std::istreambuf_iterator<char>(x)), {}), by((std::istreambuf_iterator<char>(y)), {});
    CHECK(bx == by);
  }
  CHECK(files == 4 * 6 + 1);
  const auto back = load_dataset(d1.path);
  REQUIRE(back.entries.size() == 4);
  CHECK(back.stats == a.stats);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.entries[i].map == a.entries[i].map);
    CHECK(back.entries[i].labels == a.entries[i].labels);
  }
  try {
    load_dataset(d1.path / "missing");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("ALB1 label container") {
  LabelMap m{VisionTask::kCorner, 3, 11, std::vector<std::uint8_t>(33, 0)};
  m.labels[0] = m.labels[9] = m.labels[10] = m.labels[32] = 1;
  std::stringstream buf;
  write_labels(buf, m);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "ALB1");
  CHECK(bytes.size() == 4 + 4 + 6 + 8 + 3 * 2);
  CHECK(read_labels(buf) == m);
}
