#include "afflab/affordance.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "afflab/error.hpp"

namespace afflab {

namespace {

std::array<double, 2> rotation(int k) {
  const int m = ((k % kGraspAngles) + kGraspAngles) % kGraspAngles;
  switch (m) {
    case 0: return {1.0, 0.0};
    case 4: return {0.0, 1.0};
    case 8: return {-1.0, 0.0};
    case 12: return {0.0, -1.0};
    default: return {std::cos(m * kAngleStep), std::sin(m * kAngleStep)};
  }
}

void check_input(const NormalizedInput& input) {
  if (input.channels != nn::kInputChannels)
    throw Error(ErrorCode::kShapeMismatch, "expected " + std::to_string(nn::kInputChannels) + " input channels");
}

float squash(float logit) {
  constexpr float lo = std::numeric_limits<float>::denorm_min();
  const float hi = std::nextafter(1.0f, 0.0f);
  return std::clamp(nn::sigmoid(logit), lo, hi);
}

void write_png(const std::filesystem::path& path, int height, int width, int channels,
               const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
    throw Error(ErrorCode::kShapeMismatch, "png buffer size mismatch");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorCode::kIo, "png encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw Error(ErrorCode::kIo, "cannot close " + path.string());
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

// Nearest lattice index to s; 0 means "round toward c" on a tie and +-1 forces
// the side (used on the centre line, where toward-c is undefined).
int nearest_index(double s, double c, int side) {
  constexpr double tol = 1e-9;
  const double lo = std::floor(s + tol);
  const double frac = s - lo;
  if (std::abs(frac) <= tol) return static_cast<int>(lo);
  if (std::abs(frac - 1.0) <= tol) return static_cast<int>(lo) + 1;
  if (std::abs(frac - 0.5) > tol) return static_cast<int>(frac < 0.5 ? lo : lo + 1);
  if (side == 0) side = (lo + 0.5 < c) ? 1 : -1;
  return static_cast<int>(side > 0 ? lo + 1 : lo);
}

}  // namespace

std::array<int, 2> nearest_pixel(double row, double col, int height, int width) {
  constexpr double tol = 1e-9;
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  const double dy = row - cy, dx = col - cx;
  // on a centre line a quarter turn swaps the axes, so the side is tied to the
  // sign of the other offset (pinwheel)
  const int row_side = std::abs(dy) <= tol ? (dx > 0 ? 1 : -1) : 0;
  const int col_side = std::abs(dx) <= tol ? (dy > 0 ? -1 : 1) : 0;
  return {std::clamp(nearest_index(row, cy, row_side), 0, height - 1),
          std::clamp(nearest_index(col, cx, col_side), 0, width - 1)};
}

std::string_view to_string(AffordanceTask task) noexcept {
  return task == AffordanceTask::kSuction ? "suction" : "grasp";
}

std::optional<AffordanceTask> parse_affordance_task(std::string_view token) noexcept {
  if (token == "suction") return AffordanceTask::kSuction;
  if (token == "grasp") return AffordanceTask::kGrasp;
  return std::nullopt;
}

std::array<double, 2> frame_to_image(int k, double row, double col, int height, int width) {
  const auto [c, s] = rotation(k);
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  const double dx = col - cx, dy = row - cy;
  return {cy + s * dx + c * dy, cx + c * dx - s * dy};
}

Planes<float> rotate_window(const Planes<float>& input, int k, Resampling mode, int row0, int col0, int rows,
                            int cols, std::vector<std::uint8_t>* valid) {
  const int H = input.height, W = input.width, C = input.channels;
  Planes<float> out(C, rows, cols);
  if (valid) valid->assign(static_cast<std::size_t>(rows) * cols, 0);
  constexpr double eps = 1e-9;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int fr = row0 + r, fc = col0 + c;
      const std::size_t o = static_cast<std::size_t>(r) * cols + c;
      if (k % kGraspAngles == 0) {
        if (fr < 0 || fc < 0 || fr >= H || fc >= W) continue;
        for (int ch = 0; ch < C; ++ch) out.at(ch, r, c) = input.at(ch, fr, fc);
        if (valid) (*valid)[o] = 1;
        continue;
      }
      auto [sy, sx] = frame_to_image(k, fr, fc, H, W);
      if (sy < -eps || sx < -eps || sy > H - 1 + eps || sx > W - 1 + eps) continue;
      sy = std::clamp(sy, 0.0, H - 1.0);
      sx = std::clamp(sx, 0.0, W - 1.0);
      if (valid) (*valid)[o] = 1;
      if (mode == Resampling::kNearest) {
        const auto [iu, iv] = nearest_pixel(sy, sx, H, W);
        for (int ch = 0; ch < C; ++ch) out.at(ch, r, c) = input.at(ch, iu, iv);
      } else {
        const int u0 = std::min(static_cast<int>(std::floor(sy)), std::max(H - 2, 0));
        const int v0 = std::min(static_cast<int>(std::floor(sx)), std::max(W - 2, 0));
        const int u1 = std::min(u0 + 1, H - 1), v1 = std::min(v0 + 1, W - 1);
        const float fu = static_cast<float>(sy - u0), fv = static_cast<float>(sx - v0);
        for (int ch = 0; ch < C; ++ch) {
          const float top = (1.0f - fv) * input.at(ch, u0, v0) + fv * input.at(ch, u0, v1);
          const float bottom = (1.0f - fv) * input.at(ch, u1, v0) + fv * input.at(ch, u1, v1);
          out.at(ch, r, c) = (1.0f - fu) * top + fu * bottom;
        }
      }
    }
  return out;
}

Planes<float> rotate_input(const Planes<float>& input, int k, Resampling mode, std::vector<std::uint8_t>* valid) {
  return rotate_window(input, k, mode, 0, 0, input.height, input.width, valid);
}

AffordanceMap predict_suction(const nn::NetParams& params, const NormalizedInput& input) {
  check_input(input);
  AffordanceMap aff;
  aff.task = AffordanceTask::kSuction;
  aff.planes = 1;
  aff.height = input.height;
  aff.width = input.width;
  const auto logits = nn::forward(params, input);
  aff.values.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) aff.values[i] = squash(logits[i]);
  aff.valid.assign(logits.size(), 1);
  return aff;
}

AffordanceMap predict_grasp(const nn::NetParams& params, const NormalizedInput& input, Resampling mode) {
  check_input(input);
  AffordanceMap aff;
  aff.task = AffordanceTask::kGrasp;
  aff.planes = kGraspAngles;
  aff.height = input.height;
  aff.width = input.width;
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  aff.values.assign(plane * kGraspAngles, 0.0f);
  aff.valid.assign(plane * kGraspAngles, 0);
  std::vector<std::uint8_t> valid;
  for (int k = 0; k < kGraspAngles; ++k) {
    const auto rotated = rotate_input(input, k, mode, &valid);
    const auto logits = nn::forward(params, rotated);
    for (std::size_t i = 0; i < plane; ++i) {
      if (!valid[i]) continue;
      aff.values[k * plane + i] = squash(logits[i]);
      aff.valid[k * plane + i] = 1;
    }
  }
  return aff;
}

AffordanceMap predict(AffordanceTask task, const nn::NetParams& params, const NormalizedInput& input,
                      Resampling mode) {
  return task == AffordanceTask::kSuction ? predict_suction(params, input) : predict_grasp(params, input, mode);
}

Action select_action(const AffordanceMap& aff, const Exploration& exploration, Rng& rng,
                     const std::vector<std::uint8_t>* extra_mask) {
  const std::size_t n = aff.values.size();
  auto usable = [&](std::size_t i) { return aff.valid[i] && (!extra_mask || (*extra_mask)[i]); };
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < n; ++i) {
    if (!usable(i)) continue;
    const double v = aff.values[i];
    if (v > best) {
      best = v;
      ties.clear();
    }
    if (v == best) ties.push_back(i);
  }
  if (ties.empty()) throw Error(ErrorCode::kNoValidAction, "no valid affordance entry");

  std::size_t chosen = ties.front();
  if (exploration.mode == Exploration::Mode::kGreedy) {
    if (ties.size() > 1) chosen = ties[uniform_index(rng, ties.size())];
  } else {
    if (!(exploration.temperature > 0.0))
      throw Error(ErrorCode::kInvalidArgument, "boltzmann temperature must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (usable(i)) total += std::exp((aff.values[i] - best) / exploration.temperature);
    double target = uniform01(rng) * total;
    for (std::size_t i = 0; i < n; ++i) {
      if (!usable(i)) continue;
      chosen = i;
      target -= std::exp((aff.values[i] - best) / exploration.temperature);
      if (target < 0.0) break;
    }
  }

  const std::size_t plane = static_cast<std::size_t>(aff.height) * aff.width;
  Action a;
  a.angle_index = static_cast<int>(chosen / plane);
  a.frame_pixel = {static_cast<int>((chosen % plane) / aff.width), static_cast<int>(chosen % aff.width)};
  a.value = aff.values[chosen];
  if (aff.task == AffordanceTask::kGrasp) {
    const auto [sy, sx] = frame_to_image(a.angle_index, a.frame_pixel[0], a.frame_pixel[1], aff.height, aff.width);
    a.pixel = nearest_pixel(sy, sx, aff.height, aff.width);
  } else {
    a.pixel = a.frame_pixel;
  }
  return a;
}

Command action_to_command(const Action& action, const Heightmap& map, AffordanceTask task) {
  const auto [u, v] = action.pixel;
  if (!map.contains(u, v) || !map.valid[map.index(u, v)])
    throw Error(ErrorCode::kInvalidTarget, "action pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                                               ") is not a valid heightmap pixel");
  const std::array<double, 3> p{map.origin[0] + (v + 0.5) * map.pixel_size,
                                map.origin[1] + (u + 0.5) * map.pixel_size, map.depth[map.index(u, v)]};
  if (task == AffordanceTask::kSuction) return sim::SuctionCommand{p};
  return sim::GraspCommand{p, action.angle_index * kAngleStep};
}

sim::Outcome execute(sim::Scene& scene, const Command& command) {
  if (const auto* s = std::get_if<sim::SuctionCommand>(&command)) return sim::execute_suction(scene, *s);
  return sim::execute_grasp(scene, std::get<sim::GraspCommand>(command));
}

std::vector<float> unrotate_plane(const AffordanceMap& aff, int k) {
  const int H = aff.height, W = aff.width;
  std::vector<float> out(static_cast<std::size_t>(H) * W, 0.0f);
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      const auto [fr, fc] = frame_to_image(-k, u, v, H, W);
      if (fr < -0.5 || fc < -0.5 || fr > H - 0.5 || fc > W - 0.5) continue;
      const auto [r, c] = nearest_pixel(fr, fc, H, W);
      if (r < 0 || c < 0 || r >= H || c >= W || !aff.valid[aff.index(k, r, c)]) continue;
      out[static_cast<std::size_t>(u) * W + v] = aff.value(k, r, c);
    }
  return out;
}

std::array<float, 3> jet(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [&](double center) { return static_cast<float>(std::clamp(1.5 - std::abs(4.0 * t - center), 0.0, 1.0)); };
  return {channel(3.0), channel(2.0), channel(1.0)};
}

std::vector<std::filesystem::path> render_affordance(const AffordanceMap& aff, const Heightmap& map,
                                                     const std::filesystem::path& dir, std::optional<int> plane,
                                                     double alpha) {
  if (aff.height != map.height || aff.width != map.width)
    throw Error(ErrorCode::kShapeMismatch, "affordance map and heightmap differ in size");
  if (plane && (*plane < 0 || *plane >= aff.planes))
    throw Error(ErrorCode::kInvalidArgument, "plane index out of range");
  std::filesystem::create_directories(dir);
  const std::size_t n = map.pixel_count();
  std::vector<std::filesystem::path> written;
  std::vector<float> heat(n, 0.0f);
  for (int k = 0; k < aff.planes; ++k) {
    if (plane && k != *plane) continue;
    const auto values = unrotate_plane(aff, k);
    std::vector<std::uint8_t> gray(n);
    for (std::size_t i = 0; i < n; ++i) {
      gray[i] = to_byte(values[i]);
      heat[i] = std::max(heat[i], values[i]);
    }
    char name[32];
    std::snprintf(name, sizeof name, "plane_%02d.png", k);
    write_png_gray(dir / name, map.height, map.width, gray);
    written.push_back(dir / name);
  }
  std::vector<std::uint8_t> rgb(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto color = jet(heat[i]);
    for (int c = 0; c < 3; ++c) rgb[3 * i + c] = to_byte((1.0 - alpha) * map.rgb[3 * i + c] + alpha * color[c]);
  }
  write_png_rgb(dir / "overlay.png", map.height, map.width, rgb);
  written.push_back(dir / "overlay.png");
  return written;
}

void write_png_gray(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& pixels) {
  write_png(path, height, width, 1, pixels);
}

void write_png_rgb(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& pixels) {
  write_png(path, height, width, 3, pixels);
}

}  // namespace afflab
