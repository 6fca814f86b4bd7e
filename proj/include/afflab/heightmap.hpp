#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "afflab/planes.hpp"

namespace afflab {

/// Orthographic top-down RGB-D image of the workspace. Pixel (row u, col v)
/// covers world x in [origin.x + v*ps, origin.x + (v+1)*ps) and y likewise
/// with u. Unobserved pixels have depth 0 and valid == 0.
struct Heightmap {
  int height = 0;
  int width = 0;
  double pixel_size = 0.0;
  std::array<double, 2> origin{0.0, 0.0};
  std::vector<float> rgb;            // H*W*3, interleaved, values in [0, 1]
  std::vector<float> depth;          // H*W, meters above the workspace plane
  std::vector<std::uint8_t> valid;   // H*W, 0 or 1

  static Heightmap blank(int height, int width, double pixel_size, std::array<double, 2> origin);

  std::size_t index(int u, int v) const noexcept { return static_cast<std::size_t>(u) * width + v; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height) * width; }
  bool contains(int u, int v) const noexcept { return u >= 0 && v >= 0 && u < height && v < width; }

  friend bool operator==(const Heightmap&, const Heightmap&) = default;
};

struct NormStats {
  std::array<double, 3> rgb_mean{0.0, 0.0, 0.0};
  std::array<double, 3> rgb_std{1.0, 1.0, 1.0};
  double depth_mean = 0.0;
  double depth_std = 1.0;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kMinNormStd = 1e-6;

/// 4×H×W network input: normalized r, g, b, depth planes.
using NormalizedInput = Planes<float>;

struct CloudPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::array<float, 3> rgb{0.0f, 0.0f, 0.0f};
};

struct Projection {
  Heightmap map;
  std::size_t rejected = 0;       // points with non-finite coordinates
  std::size_t out_of_bounds = 0;  // finite points outside the grid
};

/// Back-projects points straight down onto the grid; per pixel the topmost
/// point wins (ties go to the later point). Heights below the workspace
/// plane are clamped to 0.
Projection project_to_heightmap(std::span<const CloudPoint> cloud, std::array<double, 2> origin,
                                double pixel_size, int height, int width);

/// Per-channel mean and population std over valid pixels of all maps, std
/// clamped below by kMinNormStd. Throws EmptyDataset when nothing is valid.
NormStats compute_norm_stats(std::span<const Heightmap> maps);

/// (value - mean) / std per channel; invalid pixels are zero in all planes.
NormalizedInput normalize(const Heightmap& map, const NormStats& stats);

// "AHM1" container: magic, H, W (u32 LE), pixel_size, origin x, origin y
// (f64 LE), float32 planes r, g, b, depth, then one validity byte per pixel.
void write_heightmap(std::ostream& out, const Heightmap& map);
Heightmap read_heightmap(std::istream& in);
void save_heightmap(const Heightmap& map, const std::filesystem::path& path);
Heightmap load_heightmap(const std::filesystem::path& path);

void save_norm_stats(const NormStats& stats, const std::filesystem::path& path);
NormStats load_norm_stats(const std::filesystem::path& path);

}  // namespace afflab
