#pragma once

#include <cstddef>
#include <vector>

namespace afflab {

/// Channel-major stack of H×W planes (C×H×W, row-major within a plane).
template <typename T>
struct Planes {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Planes() = default;
  Planes(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, T{0}) {}

  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }

  T& at(int c, int y, int x) noexcept {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const T& at(int c, int y, int x) const noexcept {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  friend bool operator==(const Planes&, const Planes&) = default;
};

}  // namespace afflab
