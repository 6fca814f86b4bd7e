#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "afflab/binsim.hpp"
#include "afflab/convnet.hpp"
#include "afflab/heightmap.hpp"
#include "afflab/random.hpp"

namespace afflab {

enum class AffordanceTask { kSuction, kGrasp };

std::string_view to_string(AffordanceTask task) noexcept;
std::optional<AffordanceTask> parse_affordance_task(std::string_view token) noexcept;

inline constexpr int kGraspAngles = 16;
inline constexpr double kAngleStep = 2.0 * sim::kPi / kGraspAngles;

enum class Resampling { kBilinear, kNearest };

struct AffordanceMap {
  AffordanceTask task = AffordanceTask::kSuction;
  int planes = 1;  // 1 for suction, kGraspAngles for grasp
  int height = 0;
  int width = 0;
  double angle_step = kAngleStep;
  std::vector<float> values;        // planes×H×W, plane k in its rotated frame
  std::vector<std::uint8_t> valid;  // planes×H×W

  std::size_t index(int k, int u, int v) const {
    return (static_cast<std::size_t>(k) * height + u) * width + v;
  }
  float value(int k, int u, int v) const { return values[index(k, u, v)]; }
};

struct Action {
  std::array<int, 2> pixel{0, 0};  // (row, col) in the heightmap frame
  int angle_index = 0;
  double value = 0.0;
  std::array<int, 2> frame_pixel{0, 0};  // (row, col) in the rotated frame of angle_index

  friend bool operator==(const Action&, const Action&) = default;
};

struct Exploration {
  enum class Mode { kGreedy, kBoltzmann } mode = Mode::kGreedy;
  double temperature = 0.05;

  static Exploration greedy() { return {Mode::kGreedy, 0.0}; }
  static Exploration boltzmann(double tau) { return {Mode::kBoltzmann, tau}; }
};

/// Where the pixel centre q of the frame rotated by angle_index k samples
/// the original image: c + Rot(k * kAngleStep) (q - c), c the image centre,
/// coordinates as (x = col, y = row). Returns (row, col).
std::array<double, 2> frame_to_image(int k, double row, double col, int height, int width);

/// Lattice pixel nearest to an image position. Exact ties are resolved in a
/// way that commutes with quarter turns about the image centre: toward the
/// centre, or on a centre line toward the side fixed by the other coordinate.
std::array<int, 2> nearest_pixel(double row, double col, int height, int width);

/// Input rotated by -k * kAngleStep about the image centre; out-of-bounds
/// samples are zero and flagged in `valid` (optional). Only the window
/// [row0, row0 + rows) × [col0, col0 + cols) of the rotated frame is produced.
Planes<float> rotate_window(const Planes<float>& input, int k, Resampling mode, int row0, int col0, int rows,
                            int cols, std::vector<std::uint8_t>* valid = nullptr);
Planes<float> rotate_input(const Planes<float>& input, int k, Resampling mode,
                           std::vector<std::uint8_t>* valid = nullptr);

AffordanceMap predict_suction(const nn::NetParams& params, const NormalizedInput& input);
AffordanceMap predict_grasp(const nn::NetParams& params, const NormalizedInput& input,
                            Resampling mode = Resampling::kBilinear);
AffordanceMap predict(AffordanceTask task, const nn::NetParams& params, const NormalizedInput& input,
                      Resampling mode = Resampling::kBilinear);

/// Picks an entry among those with aff.valid set (and `extra_mask`, when
/// given, also set). Greedy ties and Boltzmann draws use `rng`.
Action select_action(const AffordanceMap& aff, const Exploration& exploration, Rng& rng,
                     const std::vector<std::uint8_t>* extra_mask = nullptr);

using Command = std::variant<sim::SuctionCommand, sim::GraspCommand>;

Command action_to_command(const Action& action, const Heightmap& map, AffordanceTask task);

sim::Outcome execute(sim::Scene& scene, const Command& command);

/// Plane k resampled back into the heightmap frame (nearest); pixels the
/// rotated frame does not cover are 0.
std::vector<float> unrotate_plane(const AffordanceMap& aff, int k);

/// 8-bit grayscale per-plane images and an RGB overlay (jet heatmap alpha
/// blended over the render) written as PNG. Returns the files written.
std::vector<std::filesystem::path> render_affordance(const AffordanceMap& aff, const Heightmap& map,
                                                     const std::filesystem::path& dir,
                                                     std::optional<int> plane = std::nullopt, double alpha = 0.5);

void write_png_gray(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& pixels);
void write_png_rgb(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& pixels);

/// Jet colormap for t in [0, 1].
std::array<float, 3> jet(double t);

}  // namespace afflab
