#pragma once

// Brute-force Canny and Harris built from 2D kernels: full 2D Gaussian
// window instead of separable passes, explicit 3x3 Sobel masks, bilinear
// sampling of the magnitude one ring step along the gradient, and
// hysteresis by repeated sweeps until nothing changes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace reference {

struct Image {
  int h = 0, w = 0;
  std::vector<double> px;
  double at_clamped(int r, int c) const { return px[std::clamp(r, 0, h - 1) * w + std::clamp(c, 0, w - 1)]; }
};

inline Image blur2d(const Image& img, double sigma) {
  const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> g(2 * rad + 1);
  double total = 0.0;
  for (int i = -rad; i <= rad; ++i) total += g[i + rad] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  Image out{img.h, img.w, std::vector<double>(img.px.size())};
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i)
        for (int j = -rad; j <= rad; ++j)
          acc += g[i + rad] * g[j + rad] / (total * total) * img.at_clamped(r + i, c + j);
      out.px[r * img.w + c] = acc;
    }
  return out;
}

inline void sobel3x3(const Image& img, Image& gx, Image& gy) {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  gx = gy = Image{img.h, img.w, std::vector<double>(img.px.size())};
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      double sx = 0.0, sy = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double v = img.at_clamped(r + i - 1, c + j - 1);
          sx += kx[i][j] * v;
          sy += ky[i][j] * v;
        }
      gx.px[r * img.w + c] = sx;
      gy.px[r * img.w + c] = sy;
    }
}

inline std::vector<std::uint8_t> canny(const Image& img, double sigma, double lo, double hi) {
  const Image s = blur2d(img, sigma);
  Image gx, gy;
  sobel3x3(s, gx, gy);
  const int H = img.h, W = img.w;
  std::vector<double> mag(img.px.size());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::sqrt(gx.px[i] * gx.px[i] + gy.px[i] * gy.px[i]);
  const double peak = *std::max_element(mag.begin(), mag.end());
  auto mag_at = [&](int r, int c) { return (r < 0 || c < 0 || r >= H || c >= W) ? 0.0 : mag[r * W + c]; };
  // Bilinear sample of the magnitude at a fractional position.
  auto sample = [&](double r, double c) {
    const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0, fc = c - c0;
    return (1 - fr) * (1 - fc) * mag_at(r0, c0) + (1 - fr) * fc * mag_at(r0, c0 + 1) +
           fr * (1 - fc) * mag_at(r0 + 1, c0) + fr * fc * mag_at(r0 + 1, c0 + 1);
  };
  std::vector<double> keep(mag.size(), 0.0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double m = mag[r * W + c];
      if (m <= 0.0) continue;
      // step to the square ring of radius 1 along the gradient
      const double dx = gx.px[r * W + c], dy = gy.px[r * W + c];
      const double step = std::max(std::abs(dx), std::abs(dy));
      const double ux = dx / step, uy = dy / step;
      const double fwd = sample(r + uy, c + ux), back = sample(r - uy, c - ux);
      if (m > back && m >= fwd) keep[r * W + c] = m;
    }
  std::vector<std::uint8_t> edge(mag.size(), 0);
  for (std::size_t i = 0; i < keep.size(); ++i) edge[i] = keep[i] > 0.0 && keep[i] >= hi * peak;
  for (bool changed = true; changed;) {
    changed = false;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const int i = r * W + c;
        if (edge[i] || !(keep[i] > 0.0 && keep[i] >= lo * peak)) continue;
        for (int a = std::max(0, r - 1); a <= std::min(H - 1, r + 1) && !edge[i]; ++a)
          for (int b = std::max(0, c - 1); b <= std::min(W - 1, c + 1); ++b)
            if (edge[a * W + b]) {
              edge[i] = 1;
              changed = true;
              break;
            }
      }
  }
  return edge;
}

inline std::vector<std::uint8_t> harris(const Image& img, double sigma, double k, double thresh) {
  Image gx, gy;
  sobel3x3(img, gx, gy);
  Image a{img.h, img.w, std::vector<double>(img.px.size())}, b = a, c = a;
  for (std::size_t i = 0; i < img.px.size(); ++i) {
    a.px[i] = gx.px[i] * gx.px[i];
    b.px[i] = gy.px[i] * gy.px[i];
    c.px[i] = gx.px[i] * gy.px[i];
  }
  a = blur2d(a, sigma);
  b = blur2d(b, sigma);
  c = blur2d(c, sigma);
  const int H = img.h, W = img.w;
  std::vector<double> R(img.px.size());
  for (std::size_t i = 0; i < R.size(); ++i) {
    const double det = a.px[i] * b.px[i] - c.px[i] * c.px[i], tr = a.px[i] + b.px[i];
    R[i] = det - k * tr * tr;
  }
  const double top = *std::max_element(R.begin(), R.end());
  std::vector<std::uint8_t> out(R.size(), 0);
  if (top <= 0.0) return out;
  for (int r = 0; r < H; ++r)
    for (int col = 0; col < W; ++col) {
      const double v = R[r * W + col];
      if (v <= thresh * top) continue;
      bool is_max = true;
      for (int i = std::max(0, r - 1); i <= std::min(H - 1, r + 1); ++i)
        for (int j = std::max(0, col - 1); j <= std::min(W - 1, col + 1); ++j)
          if (R[i * W + j] > v) is_max = false;
      out[r * W + col] = is_max;
    }
  return out;
}

}  // namespace reference
