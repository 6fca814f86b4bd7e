#include "afflab/heightmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "afflab/binary_io.hpp"
#include "afflab/error.hpp"

namespace afflab {

Heightmap Heightmap::blank(int height, int width, double pixel_size, std::array<double, 2> origin) {
  if (height < 1 || width < 1 || !(pixel_size > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "heightmap needs H, W >= 1 and pixel_size > 0");
  Heightmap m;
  m.height = height;
  m.width = width;
  m.pixel_size = pixel_size;
  m.origin = origin;
  const std::size_t n = static_cast<std::size_t>(height) * width;
  m.rgb.assign(3 * n, 0.0f);
  m.depth.assign(n, 0.0f);
  m.valid.assign(n, 0);
  return m;
}

Projection project_to_heightmap(std::span<const CloudPoint> cloud, std::array<double, 2> origin,
                                double pixel_size, int height, int width) {
  Projection result;
  result.map = Heightmap::blank(height, width, pixel_size, origin);
  Heightmap& m = result.map;
  std::vector<double> top(m.pixel_count(), 0.0);
  for (const CloudPoint& p : cloud) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      ++result.rejected;
      continue;
    }
    const double fu = std::floor((p.y - origin[1]) / pixel_size);
    const double fv = std::floor((p.x - origin[0]) / pixel_size);
    if (fu < 0.0 || fv < 0.0 || fu >= height || fv >= width) {
      ++result.out_of_bounds;
      continue;
    }
    const std::size_t i = m.index(static_cast<int>(fu), static_cast<int>(fv));
    const double z = std::max(p.z, 0.0);
    if (m.valid[i] && z < top[i]) continue;
    top[i] = z;
    m.valid[i] = 1;
    for (int c = 0; c < 3; ++c) m.rgb[3 * i + c] = std::clamp(p.rgb[c], 0.0f, 1.0f);
  }
  for (std::size_t i = 0; i < top.size(); ++i) m.depth[i] = static_cast<float>(top[i]);
  return result;
}

NormStats compute_norm_stats(std::span<const Heightmap> maps) {
  std::array<double, 4> sum{};
  std::size_t count = 0;
  for (const Heightmap& m : maps) {
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
      if (!m.valid[i]) continue;
      for (int c = 0; c < 3; ++c) sum[c] += m.rgb[3 * i + c];
      sum[3] += m.depth[i];
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::kEmptyDataset, "no valid pixels to compute normalization statistics");
  std::array<double, 4> mean{};
  for (int c = 0; c < 4; ++c) mean[c] = sum[c] / static_cast<double>(count);

  // second pass for the variance keeps cancellation out of the picture
  std::array<double, 4> sq{};
  for (const Heightmap& m : maps) {
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
      if (!m.valid[i]) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = m.rgb[3 * i + c] - mean[c];
        sq[c] += d * d;
      }
      const double d = m.depth[i] - mean[3];
      sq[3] += d * d;
    }
  }
  NormStats s;
  for (int c = 0; c < 3; ++c) {
    s.rgb_mean[c] = mean[c];
    s.rgb_std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(count)), kMinNormStd);
  }
  s.depth_mean = mean[3];
  s.depth_std = std::max(std::sqrt(sq[3] / static_cast<double>(count)), kMinNormStd);
  return s;
}

NormalizedInput normalize(const Heightmap& map, const NormStats& stats) {
  for (double v : {stats.rgb_std[0], stats.rgb_std[1], stats.rgb_std[2], stats.depth_std})
    if (!(v > 0.0)) throw Error(ErrorCode::kInvalidArgument, "normalization std must be > 0");
  NormalizedInput out(4, map.height, map.width);
  const std::size_t n = map.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (!map.valid[i]) continue;
    for (int c = 0; c < 3; ++c)
      out.data[c * n + i] = static_cast<float>((map.rgb[3 * i + c] - stats.rgb_mean[c]) / stats.rgb_std[c]);
    out.data[3 * n + i] = static_cast<float>((map.depth[i] - stats.depth_mean) / stats.depth_std);
  }
  return out;
}

void write_heightmap(std::ostream& out, const Heightmap& map) {
  BinaryWriter w(out);
  w.magic("AHM1");
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  w.f64(map.pixel_size);
  w.f64(map.origin[0]);
  w.f64(map.origin[1]);
  const std::size_t n = map.pixel_count();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) w.f32(map.rgb[3 * i + c]);
  w.f32s(map.depth);
  w.bytes(std::as_bytes(std::span(map.valid)));
}

Heightmap read_heightmap(std::istream& in) {
  BinaryReader r(in, ErrorCode::kIo);
  r.expect_magic("AHM1");
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  if (h == 0 || w == 0 || h > 65536 || w > 65536) throw Error(ErrorCode::kIo, "heightmap dimensions out of range");
  const double ps = r.f64();
  const double ox = r.f64();
  const double oy = r.f64();
  Heightmap m = Heightmap::blank(static_cast<int>(h), static_cast<int>(w), ps, {ox, oy});
  const std::size_t n = m.pixel_count();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) m.rgb[3 * i + c] = r.f32();
  r.f32s(m.depth);
  r.read(reinterpret_cast<char*>(m.valid.data()), n);
  return m;
}

void save_heightmap(const Heightmap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_heightmap(out, map);
}

Heightmap load_heightmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_heightmap(in);
}

void save_norm_stats(const NormStats& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  char buf[64];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << key << " = " << buf << "\n";
  };
  put("rgb_mean_r", s.rgb_mean[0]);
  put("rgb_mean_g", s.rgb_mean[1]);
  put("rgb_mean_b", s.rgb_mean[2]);
  put("rgb_std_r", s.rgb_std[0]);
  put("rgb_std_g", s.rgb_std[1]);
  put("rgb_std_b", s.rgb_std[2]);
  put("depth_mean", s.depth_mean);
  put("depth_std", s.depth_std);
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    kv[key] = std::stod(line.substr(eq + 1));
  }
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::kIo, std::string("stats file missing ") + key);
    return it->second;
  };
  NormStats s;
  s.rgb_mean = {get("rgb_mean_r"), get("rgb_mean_g"), get("rgb_mean_b")};
  s.rgb_std = {get("rgb_std_r"), get("rgb_std_g"), get("rgb_std_b")};
  s.depth_mean = get("depth_mean");
  s.depth_std = get("depth_std");
  return s;
}

}  // namespace afflab
