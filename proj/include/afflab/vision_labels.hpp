#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "afflab/binsim.hpp"
#include "afflab/heightmap.hpp"

namespace afflab {

enum class VisionTask { kEdge, kCorner, kCenter, kForeground, kFlatSurface };

inline constexpr std::array<VisionTask, 5> kVisionTasks{VisionTask::kEdge, VisionTask::kCorner, VisionTask::kCenter,
                                                        VisionTask::kForeground, VisionTask::kFlatSurface};

std::string_view to_string(VisionTask task) noexcept;
std::optional<VisionTask> parse_vision_task(std::string_view token) noexcept;

/// Single-channel double image, row-major.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  double at(int u, int v) const { return pixels[static_cast<std::size_t>(u) * width + v]; }
};

struct LabelMap {
  VisionTask task = VisionTask::kEdge;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;  // row-major, 0 or 1

  std::uint8_t at(int u, int v) const { return labels[static_cast<std::size_t>(u) * width + v]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct LabelParams {
  double sigma = 1.0;
  double canny_lo = 0.1;  // fractions of the maximum gradient magnitude
  double canny_hi = 0.2;
  double harris_k = 0.05;
  double harris_thresh = 0.01;  // fraction of the maximum response
  int center_radius = 3;
  double fg_threshold = 0.005;
  double flat_angle = 15.0 * sim::kPi / 180.0;
};

/// 0.299 r + 0.587 g + 0.114 b.
GrayImage luminance(const Heightmap& map);

// Shared building blocks (replicated borders).
std::vector<double> gaussian_kernel(double sigma);
GrayImage gaussian_blur(const GrayImage& img, double sigma);
void sobel(const GrayImage& img, GrayImage& gx, GrayImage& gy);

LabelMap canny_edges(const GrayImage& gray, double sigma, double lo, double hi);
LabelMap harris_corners(const GrayImage& gray, double sigma, double k, double thresh);
LabelMap object_centers(const sim::Scene& scene, int radius_px);
LabelMap foreground_mask(const Heightmap& map, double threshold);
LabelMap flat_surface(const sim::NormalMap& normals, const LabelMap& foreground, double max_angle);

/// Area centroid of a polygon.
sim::Vec2 polygon_centroid(std::span<const sim::Vec2> polygon);

/// All five label maps of a rendered scene, indexed like kVisionTasks.
std::array<LabelMap, 5> compute_labels(const sim::Scene& scene, const Heightmap& map, const LabelParams& params);

struct DatasetEntry {
  Heightmap map;
  std::array<LabelMap, 5> labels;
};

struct VisionDataset {
  std::vector<DatasetEntry> entries;
  NormStats stats;
};

/// Scene i uses seed + i. Stats are computed over all renders.
VisionDataset build_dataset(std::span<const sim::ObjectShape> object_set, int n_scenes, std::uint64_t seed,
                            const LabelParams& params, int n_instances, const sim::SimConfig& config = {});

// "ALB1" container: magic, task token (u32 length + bytes), H, W (u32 LE),
// then rows bit-packed LSB first, ceil(W/8) bytes per row.
void write_labels(std::ostream& out, const LabelMap& labels);
LabelMap read_labels(std::istream& in);

/// Directory layout: scene_NNNNN.ahm plus scene_NNNNN.<task>.alb per entry and
/// norm_stats.txt.
void save_dataset(const VisionDataset& dataset, const std::filesystem::path& dir);
VisionDataset load_dataset(const std::filesystem::path& dir);

}  // namespace afflab
