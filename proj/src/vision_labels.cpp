#include "afflab/vision_labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "afflab/binary_io.hpp"
#include "afflab/error.hpp"

namespace afflab {

namespace {

constexpr std::array<std::string_view, 5> kTaskNames{"edge", "corner", "center", "foreground", "flat_surface"};

void require_size(const GrayImage& img) {
  if (img.height < 3 || img.width < 3)
    throw Error(ErrorCode::kImageTooSmall, "image must be at least 3x3, got " + std::to_string(img.height) + "x" +
                                               std::to_string(img.width));
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width)
    throw Error(ErrorCode::kShapeMismatch, "image buffer does not match its size");
}

LabelMap empty_labels(VisionTask task, int height, int width) {
  return {task, height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
}

GrayImage blank_like(const GrayImage& img) {
  return {img.height, img.width, std::vector<double>(img.pixels.size(), 0.0)};
}

std::string entry_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu", i);
  return buf;
}

}  // namespace

std::string_view to_string(VisionTask task) noexcept { return kTaskNames[static_cast<std::size_t>(task)]; }

std::optional<VisionTask> parse_vision_task(std::string_view token) noexcept {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i)
    if (kTaskNames[i] == token) return kVisionTasks[i];
  return std::nullopt;
}

GrayImage luminance(const Heightmap& map) {
  GrayImage out{map.height, map.width, std::vector<double>(map.pixel_count())};
  for (std::size_t i = 0; i < map.pixel_count(); ++i)
    out.pixels[i] = 0.299 * map.rgb[3 * i] + 0.587 * map.rgb[3 * i + 1] + 0.114 * map.rgb[3 * i + 2];
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& w : k) w /= sum;
  return k;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int H = img.height, W = img.width;
  GrayImage tmp = blank_like(img), out = blank_like(img);
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(u, std::clamp(v + i, 0, W - 1));
      tmp.pixels[static_cast<std::size_t>(u) * W + v] = acc;
    }
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(std::clamp(u + i, 0, H - 1), v);
      out.pixels[static_cast<std::size_t>(u) * W + v] = acc;
    }
  return out;
}

void sobel(const GrayImage& img, GrayImage& gx, GrayImage& gy) {
  const int H = img.height, W = img.width;
  gx = blank_like(img);
  gy = blank_like(img);
  auto px = [&](int u, int v) { return img.at(std::clamp(u, 0, H - 1), std::clamp(v, 0, W - 1)); };
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      const std::size_t i = static_cast<std::size_t>(u) * W + v;
      gx.pixels[i] = (px(u - 1, v + 1) + 2.0 * px(u, v + 1) + px(u + 1, v + 1)) -
                     (px(u - 1, v - 1) + 2.0 * px(u, v - 1) + px(u + 1, v - 1));
      gy.pixels[i] = (px(u + 1, v - 1) + 2.0 * px(u + 1, v) + px(u + 1, v + 1)) -
                     (px(u - 1, v - 1) + 2.0 * px(u - 1, v) + px(u - 1, v + 1));
    }
}

LabelMap canny_edges(const GrayImage& gray, double sigma, double lo, double hi) {
  require_size(gray);
  if (!(lo >= 0.0) || !(hi >= lo)) throw Error(ErrorCode::kInvalidArgument, "canny needs 0 <= lo <= hi");
  const int H = gray.height, W = gray.width;
  const GrayImage smooth = gaussian_blur(gray, sigma);
  GrayImage gx, gy;
  sobel(smooth, gx, gy);
  std::vector<double> mag(gray.pixels.size());
  double max_mag = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    mag[i] = std::hypot(gx.pixels[i], gy.pixels[i]);
    max_mag = std::max(max_mag, mag[i]);
  }
  auto m = [&](int u, int v) {
    return (u < 0 || v < 0 || u >= H || v >= W) ? 0.0 : mag[static_cast<std::size_t>(u) * W + v];
  };

  // Thin to local maxima along the gradient direction, comparing against the
  // magnitude interpolated on the ring of 8 neighbors. The neighbor behind
  // (against the gradient) must be strictly smaller so a two-pixel plateau
  // keeps exactly one pixel.
  std::vector<double> thin(mag.size(), 0.0);
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      const std::size_t i = static_cast<std::size_t>(u) * W + v;
      if (mag[i] <= 0.0) continue;
      const double gxi = gx.pixels[i], gyi = gy.pixels[i];
      const int sx = (gxi > 0.0) - (gxi < 0.0), sy = (gyi > 0.0) - (gyi < 0.0);
      double ahead, behind;
      if (std::abs(gxi) >= std::abs(gyi)) {
        const double w = std::abs(gyi) / std::abs(gxi);
        ahead = (1.0 - w) * m(u, v + sx) + w * m(u + sy, v + sx);
        behind = (1.0 - w) * m(u, v - sx) + w * m(u - sy, v - sx);
      } else {
        const double w = std::abs(gxi) / std::abs(gyi);
        ahead = (1.0 - w) * m(u + sy, v) + w * m(u + sy, v + sx);
        behind = (1.0 - w) * m(u - sy, v) + w * m(u - sy, v - sx);
      }
      if (mag[i] > behind && mag[i] >= ahead) thin[i] = mag[i];
    }

  const double hi_thr = hi * max_mag, lo_thr = lo * max_mag;
  LabelMap out = empty_labels(VisionTask::kEdge, H, W);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < thin.size(); ++i)
    if (thin[i] > 0.0 && thin[i] >= hi_thr) {
      out.labels[i] = 1;
      stack.push_back(i);
    }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int u = static_cast<int>(i / W), v = static_cast<int>(i % W);
    for (int du = -1; du <= 1; ++du)
      for (int dv = -1; dv <= 1; ++dv) {
        const int uu = u + du, vv = v + dv;
        if (uu < 0 || vv < 0 || uu >= H || vv >= W) continue;
        const std::size_t j = static_cast<std::size_t>(uu) * W + vv;
        if (!out.labels[j] && thin[j] > 0.0 && thin[j] >= lo_thr) {
          out.labels[j] = 1;
          stack.push_back(j);
        }
      }
  }
  return out;
}

LabelMap harris_corners(const GrayImage& gray, double sigma, double k, double thresh) {
  require_size(gray);
  if (!(k > 0.0 && k < 0.25)) throw Error(ErrorCode::kInvalidArgument, "harris k must be in (0, 0.25)");
  if (!(thresh > 0.0)) throw Error(ErrorCode::kInvalidArgument, "harris threshold must be positive");
  const int H = gray.height, W = gray.width;
  GrayImage gx, gy;
  sobel(gray, gx, gy);
  GrayImage xx = blank_like(gray), yy = blank_like(gray), xy = blank_like(gray);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    xx.pixels[i] = gx.pixels[i] * gx.pixels[i];
    yy.pixels[i] = gy.pixels[i] * gy.pixels[i];
    xy.pixels[i] = gx.pixels[i] * gy.pixels[i];
  }
  xx = gaussian_blur(xx, sigma);
  yy = gaussian_blur(yy, sigma);
  xy = gaussian_blur(xy, sigma);
  std::vector<double> response(gray.pixels.size());
  double max_r = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const double tr = xx.pixels[i] + yy.pixels[i];
    response[i] = xx.pixels[i] * yy.pixels[i] - xy.pixels[i] * xy.pixels[i] - k * tr * tr;
    max_r = std::max(max_r, response[i]);
  }
  LabelMap out = empty_labels(VisionTask::kCorner, H, W);
  if (max_r <= 0.0) return out;
  const double cut = thresh * max_r;
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      const double r = response[static_cast<std::size_t>(u) * W + v];
      if (!(r > cut)) continue;
      bool peak = true;
      for (int du = -1; du <= 1 && peak; ++du)
        for (int dv = -1; dv <= 1; ++dv) {
          const int uu = u + du, vv = v + dv;
          if ((du == 0 && dv == 0) || uu < 0 || vv < 0 || uu >= H || vv >= W) continue;
          if (response[static_cast<std::size_t>(uu) * W + vv] > r) {
            peak = false;
            break;
          }
        }
      if (peak) out.labels[static_cast<std::size_t>(u) * W + v] = 1;
    }
  return out;
}

sim::Vec2 polygon_centroid(std::span<const sim::Vec2> polygon) {
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& p = polygon[i];
    const auto& q = polygon[(i + 1) % polygon.size()];
    const double c = p.x * q.y - q.x * p.y;
    a2 += c;
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

LabelMap object_centers(const sim::Scene& scene, int radius_px) {
  if (radius_px < 1) throw Error(ErrorCode::kInvalidArgument, "center radius must be >= 1");
  const int H = scene.height(), W = scene.width();
  LabelMap out = empty_labels(VisionTask::kCenter, H, W);
  for (const auto& inst : scene.instances) {
    const auto outline = sim::world_outline(scene, inst);
    const sim::Vec2 c = polygon_centroid(outline);
    const auto [u, v] = sim::pixel_of(scene.config, c.x, c.y);
    for (int du = -radius_px; du <= radius_px; ++du)
      for (int dv = -radius_px; dv <= radius_px; ++dv) {
        const int uu = u + du, vv = v + dv;
        if (du * du + dv * dv > radius_px * radius_px || uu < 0 || vv < 0 || uu >= H || vv >= W) continue;
        out.labels[static_cast<std::size_t>(uu) * W + vv] = 1;
      }
  }
  return out;
}

LabelMap foreground_mask(const Heightmap& map, double threshold) {
  if (!(threshold > 0.0)) throw Error(ErrorCode::kInvalidArgument, "foreground threshold must be positive");
  LabelMap out = empty_labels(VisionTask::kForeground, map.height, map.width);
  for (std::size_t i = 0; i < map.pixel_count(); ++i) out.labels[i] = map.depth[i] > threshold ? 1 : 0;
  return out;
}

LabelMap flat_surface(const sim::NormalMap& normals, const LabelMap& foreground, double max_angle) {
  if (!(max_angle > 0.0 && max_angle < sim::kPi / 2.0))
    throw Error(ErrorCode::kInvalidArgument, "flat angle must be in (0, 90) degrees");
  if (normals.height != foreground.height || normals.width != foreground.width)
    throw Error(ErrorCode::kShapeMismatch, "normals and foreground differ in size");
  LabelMap out = empty_labels(VisionTask::kFlatSurface, normals.height, normals.width);
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    out.labels[i] = (foreground.labels[i] && sim::is_flat(normals.normals[i], max_angle)) ? 1 : 0;
  return out;
}

std::array<LabelMap, 5> compute_labels(const sim::Scene& scene, const Heightmap& map, const LabelParams& params) {
  const GrayImage gray = luminance(map);
  LabelMap fg = foreground_mask(map, params.fg_threshold);
  LabelMap flat = flat_surface(sim::surface_normals(map), fg, params.flat_angle);
  return {canny_edges(gray, params.sigma, params.canny_lo, params.canny_hi),
          harris_corners(gray, params.sigma, params.harris_k, params.harris_thresh),
          object_centers(scene, params.center_radius), std::move(fg), std::move(flat)};
}

VisionDataset build_dataset(std::span<const sim::ObjectShape> object_set, int n_scenes, std::uint64_t seed,
                            const LabelParams& params, int n_instances, const sim::SimConfig& config) {
  if (n_scenes < 1) throw Error(ErrorCode::kInvalidArgument, "dataset needs at least one scene");
  auto shapes = std::make_shared<const std::vector<sim::ObjectShape>>(object_set.begin(), object_set.end());
  const int count = shapes->empty() ? 0 : n_instances;
  VisionDataset ds;
  ds.entries.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    const sim::Scene scene = sim::reset(shapes, count, seed + static_cast<std::uint64_t>(i), config);
    DatasetEntry e;
    e.map = sim::render(scene);
    e.labels = compute_labels(scene, e.map, params);
    ds.entries.push_back(std::move(e));
  }
  std::vector<Heightmap> maps;
  maps.reserve(ds.entries.size());
  for (const auto& e : ds.entries) maps.push_back(e.map);
  ds.stats = compute_norm_stats(maps);
  return ds;
}

void write_labels(std::ostream& out, const LabelMap& labels) {
  BinaryWriter w(out);
  w.magic("ALB1");
  w.str(to_string(labels.task));
  w.u32(static_cast<std::uint32_t>(labels.height));
  w.u32(static_cast<std::uint32_t>(labels.width));
  const int row_bytes = (labels.width + 7) / 8;
  std::vector<std::byte> row(static_cast<std::size_t>(row_bytes));
  for (int u = 0; u < labels.height; ++u) {
    std::fill(row.begin(), row.end(), std::byte{0});
    for (int v = 0; v < labels.width; ++v)
      if (labels.at(u, v)) row[v / 8] |= std::byte(1u << (v % 8));
    w.bytes(row);
  }
}

LabelMap read_labels(std::istream& in) {
  BinaryReader r(in, ErrorCode::kIo);
  r.expect_magic("ALB1");
  const std::string token = r.str(64);
  const auto task = parse_vision_task(token);
  if (!task) throw Error(ErrorCode::kIo, "unknown label task '" + token + "'");
  const std::uint32_t h = r.u32(), w = r.u32();
  if (h == 0 || w == 0 || h > 65536 || w > 65536) throw Error(ErrorCode::kIo, "label dimensions out of range");
  LabelMap out = empty_labels(*task, static_cast<int>(h), static_cast<int>(w));
  std::vector<char> row((w + 7) / 8);
  for (std::uint32_t u = 0; u < h; ++u) {
    r.read(row.data(), row.size());
    for (std::uint32_t v = 0; v < w; ++v)
      out.labels[static_cast<std::size_t>(u) * w + v] = (static_cast<unsigned char>(row[v / 8]) >> (v % 8)) & 1u;
  }
  return out;
}

void save_dataset(const VisionDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < dataset.entries.size(); ++i) {
    const auto& e = dataset.entries[i];
    const std::string stem = entry_stem(i);
    save_heightmap(e.map, dir / (stem + ".ahm"));
    for (const auto& labels : e.labels) {
      const auto path = dir / (stem + "." + std::string(to_string(labels.task)) + ".alb");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
      write_labels(out, labels);
      if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
    }
  }
  save_norm_stats(dataset.stats, dir / "norm_stats.txt");
}

VisionDataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, "dataset directory not found: " + dir.string());
  VisionDataset ds;
  for (std::size_t i = 0;; ++i) {
    const std::string stem = entry_stem(i);
    const auto map_path = dir / (stem + ".ahm");
    if (!std::filesystem::exists(map_path)) break;
    DatasetEntry e;
    e.map = load_heightmap(map_path);
    for (std::size_t t = 0; t < kVisionTasks.size(); ++t) {
      const auto path = dir / (stem + "." + std::string(to_string(kVisionTasks[t])) + ".alb");
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::kIo, "missing label file " + path.string());
      e.labels[t] = read_labels(in);
      if (e.labels[t].task != kVisionTasks[t] || e.labels[t].height != e.map.height ||
          e.labels[t].width != e.map.width)
        throw Error(ErrorCode::kIo, "label file does not match its heightmap: " + path.string());
    }
    ds.entries.push_back(std::move(e));
  }
  if (ds.entries.empty()) throw Error(ErrorCode::kEmptyDataset, "no entries in " + dir.string());
  ds.stats = load_norm_stats(dir / "norm_stats.txt");
  return ds;
}

}  // namespace afflab
