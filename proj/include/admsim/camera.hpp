#pragma once

// Pinhole intrinsics, dense depth maps and pixel back-projection.

#include <algorithm>
#include <cmath>
#include <vector>

#include "admsim/math.hpp"

namespace admsim {

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct CameraIntrinsics {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorCode::ConfigError, "focal lengths must be positive");
    if (width <= 0 || height <= 0) fail(ErrorCode::ConfigError, "resolution must be positive");
  }

  [[nodiscard]] Pixel project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }

  /// Camera-frame ray through the pixel with unit z.
  [[nodiscard]] Vec3 ray(const Pixel& px) const { return {(px.u - cx) / fx, (px.v - cy) / fy, 1.0}; }
};

/// Row-major depth in metres, sampled at integer pixel centres; 0 = invalid.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0) {}

  [[nodiscard]] double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  [[nodiscard]] bool valid(int u, int v) const {
    const double z = at(u, v);
    return z > 0.0 && std::isfinite(z);
  }
};

/// Depth at a sub-pixel location: bilinear interpolation of inverse depth
/// over the four surrounding samples (exact for planar surfaces), falling
/// back to the median of valid depths in the 5x5 window around the nearest
/// pixel.
inline double depth_at(const DepthMap& depth, const Pixel& px) {
  if (!(px.u >= 0.0 && px.v >= 0.0 && px.u <= depth.width - 1 && px.v <= depth.height - 1)) {
    fail(ErrorCode::NoDepth, "pixel outside the depth map");
  }
  const int u0 = std::min(static_cast<int>(std::floor(px.u)), std::max(depth.width - 2, 0));
  const int v0 = std::min(static_cast<int>(std::floor(px.v)), std::max(depth.height - 2, 0));
  const int u1 = std::min(u0 + 1, depth.width - 1), v1 = std::min(v0 + 1, depth.height - 1);
  const double a = px.u - u0, b = px.v - v0;
  if (depth.valid(u0, v0) && depth.valid(u1, v0) && depth.valid(u0, v1) && depth.valid(u1, v1)) {
    const double inv = (1 - a) * (1 - b) / depth.at(u0, v0) + a * (1 - b) / depth.at(u1, v0) +
                       (1 - a) * b / depth.at(u0, v1) + a * b / depth.at(u1, v1);
    return 1.0 / inv;
  }
  const int uc = static_cast<int>(std::lround(px.u)), vc = static_cast<int>(std::lround(px.v));
  std::vector<double> window;
  for (int dv = -2; dv <= 2; ++dv) {
    for (int du = -2; du <= 2; ++du) {
      const int u = uc + du, v = vc + dv;
      if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) continue;
      if (depth.valid(u, v)) window.push_back(depth.at(u, v));
    }
  }
  if (window.empty()) fail(ErrorCode::NoDepth, "no valid depth within the 5x5 window");
  std::sort(window.begin(), window.end());
  const std::size_t n = window.size();
  return n % 2 == 1 ? window[n / 2] : 0.5 * (window[n / 2 - 1] + window[n / 2]);
}

inline Vec3 backproject(const Pixel& px, const DepthMap& depth, const CameraIntrinsics& k) {
  const double z = depth_at(depth, px);
  return {z * (px.u - k.cx) / k.fx, z * (px.v - k.cy) / k.fy, z};
}

}  // namespace admsim
