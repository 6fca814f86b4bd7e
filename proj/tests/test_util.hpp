#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "afflab/binsim.hpp"
#include "afflab/heightmap.hpp"
#include "afflab/random.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("afflab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline afflab::Heightmap random_heightmap(int h, int w, std::uint64_t seed, double invalid_fraction = 0.0) {
  afflab::Rng rng(seed);
  auto map = afflab::Heightmap::blank(h, w, 0.003, {0.0, 0.0});
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) map.rgb[3 * i + c] = static_cast<float>(afflab::uniform01(rng));
    map.depth[i] = static_cast<float>(afflab::uniform(rng, 0.0, 0.05));
    map.valid[i] = afflab::uniform01(rng) >= invalid_fraction;
    if (!map.valid[i]) {
      map.depth[i] = 0.0f;
      for (int c = 0; c < 3; ++c) map.rgb[3 * i + c] = 0.0f;
    }
  }
  return map;
}

inline afflab::sim::ObjectShape box(const std::string& id, double sx, double sy, double h) {
  afflab::sim::ObjectShape s;
  s.id = id;
  s.footprint = {{-sx / 2, -sy / 2}, {sx / 2, -sy / 2}, {sx / 2, sy / 2}, {-sx / 2, sy / 2}};
  s.height = h;
  return s;
}

// Places one instance at a world position with unit scale; fails the caller
// by returning false when the simulator rejects it.
inline bool place(afflab::sim::Scene& scene, std::size_t shape, double x, double y, double yaw = 0.0) {
  afflab::sim::Instance inst;
  inst.shape = shape;
  inst.x = x;
  inst.y = y;
  inst.yaw = yaw;
  inst.scale = 1.0;
  inst.color = scene.shapes->at(shape).color;
  return afflab::sim::try_place(scene, inst);
}

}  // namespace testutil
