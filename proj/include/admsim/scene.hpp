#pragma once

// Synthetic ground truth for the vision pipeline: a keypoint grid on a plane
// seen through a pinhole camera, a rendered depth map, seeded noise and
// planted outliers.

#include <algorithm>
#include <numeric>
#include <vector>

#include "admsim/pose_estimation.hpp"

namespace admsim {

/// Plane frame: x along the width, y along the height, z normal.
struct PlaneSpec {
  Pose pose;
  double width = 0.20;            // m
  double height = 0.15;           // m
  double density = 50.0;          // grid points per m
  double template_scale = 5e-4;   // m per template pixel

  void validate() const {
    if (!(width > 0.0) || !(height > 0.0)) fail(ErrorCode::InvalidArgument, "plane dimensions must be positive");
    if (!(density > 0.0)) fail(ErrorCode::InvalidArgument, "grid density must be positive");
    if (!(template_scale > 0.0)) fail(ErrorCode::InvalidArgument, "template scale must be positive");
    if (orthonormality_error(pose.orientation) > 1e-9 || pose.orientation.determinant() < 0.0) {
      fail(ErrorCode::InvalidArgument, "plane orientation is not a rotation");
    }
  }
};

struct NoiseSpec {
  double keypoint_sigma = 0.0;  // px
  double depth_sigma = 0.0;     // m
  double outlier_rate = 0.0;    // [0, 1)
  std::uint64_t seed = 1;

  void validate() const {
    if (!(keypoint_sigma >= 0.0) || !(depth_sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "noise sigmas must be >= 0");
    if (!(outlier_rate >= 0.0 && outlier_rate < 1.0)) fail(ErrorCode::InvalidArgument, "outlier rate must be in [0, 1)");
  }
};

inline constexpr int kDescriptorBits = 32;
inline constexpr double kMinPointDepth = 0.05;     // m
inline constexpr double kOutlierMinOffset = 20.0;  // px from the true projection

struct SyntheticScene {
  Template templ;
  FeatureSet scene;
  std::vector<Correspondence> correspondences;  // index-aligned with the feature sets
  std::vector<std::size_t> outlier_indices;
  std::vector<Vec3> points_camera;              // noiseless grid points, camera frame
  DepthMap depth;
  CameraIntrinsics intrinsics;
  ObjectPose ground_truth;
};

/// +-1 code of the id's low bits; distinct ids are at least 2 apart.
inline Eigen::VectorXd id_descriptor(std::size_t id) {
  Eigen::VectorXd d(kDescriptorBits);
  for (int b = 0; b < kDescriptorBits; ++b) d[b] = ((id >> b) & 1u) ? 1.0 : -1.0;
  return d;
}

/// Template pixel of a plane-local point; (w/2, h/2) is the plane origin and
/// template v grows against plane y.
inline Pixel plane_to_template(const Vec3& local, double w_px, double h_px, double scale) {
  return {local.x() / scale + w_px / 2.0, h_px / 2.0 - local.y() / scale};
}

/// Depth of the infinite plane along every pixel ray; 0 where the ray misses
/// or hits behind the camera.
inline DepthMap render_plane_depth(const Pose& plane, const CameraIntrinsics& k) {
  DepthMap d(k.width, k.height);
  const Vec3 n = plane.orientation.col(2);
  const double num = n.dot(plane.position);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double den = n.dot(k.ray({static_cast<double>(u), static_cast<double>(v)}));
      if (std::abs(den) < 1e-12) continue;
      const double z = num / den;
      if (z > 0.0 && std::isfinite(z)) d.at(u, v) = z;
    }
  }
  return d;
}

inline SyntheticScene generate_scene(const PlaneSpec& plane, const CameraIntrinsics& k, const NoiseSpec& noise) {
  plane.validate();
  k.validate();
  noise.validate();
  Rng rng(noise.seed);

  SyntheticScene s;
  s.intrinsics = k;
  s.templ.width_px = plane.width / plane.template_scale;
  s.templ.height_px = plane.height / plane.template_scale;
  s.templ.scale = plane.template_scale;

  const int nx = static_cast<int>(std::floor(plane.width * plane.density + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(plane.height * plane.density + 1e-9)) + 1;
  const double gx = nx > 1 ? plane.width / (nx - 1) : 0.0, gy = ny > 1 ? plane.height / (ny - 1) : 0.0;

  std::vector<Vec3> local, cam;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec3 p(-plane.width / 2.0 + i * gx, plane.height / 2.0 - j * gy, 0.0);
      const Vec3 c = plane.pose.transform(p);
      if (!(c.z() > kMinPointDepth)) {
        fail(ErrorCode::PlaneBehindCamera, "grid point at depth " + std::to_string(c.z()) + " m");
      }
      local.push_back(p);
      cam.push_back(c);
    }
  }

  std::vector<Pixel> truth;
  for (std::size_t i = 0; i < cam.size(); ++i) {
    const Pixel px = k.project(cam[i]);
    if (px.u < 0.0 || px.v < 0.0 || px.u > k.width - 1 || px.v > k.height - 1) continue;
    const std::size_t id = truth.size();
    truth.push_back(px);
    s.points_camera.push_back(cam[i]);
    s.templ.features.keypoints.push_back(
        plane_to_template(local[i], s.templ.width_px, s.templ.height_px, plane.template_scale));
    s.templ.features.descriptors.push_back(id_descriptor(id));
  }
  const std::size_t n = truth.size();

  s.scene.descriptors = s.templ.features.descriptors;
  s.scene.keypoints.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double du = noise.keypoint_sigma > 0.0 ? noise.keypoint_sigma * rng.normal() : 0.0;
    const double dv = noise.keypoint_sigma > 0.0 ? noise.keypoint_sigma * rng.normal() : 0.0;
    s.scene.keypoints[i] = {truth[i].u + du, truth[i].v + dv};
  }

  const auto n_out = static_cast<std::size_t>(std::floor(noise.outlier_rate * static_cast<double>(n)));
  if (n_out > 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    s.outlier_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_out));
    std::sort(s.outlier_indices.begin(), s.outlier_indices.end());
    for (std::size_t idx : s.outlier_indices) {
      Pixel p;
      do {
        p = {rng.uniform(0.0, k.width - 1.0), rng.uniform(0.0, k.height - 1.0)};
      } while (std::hypot(p.u - truth[idx].u, p.v - truth[idx].v) < kOutlierMinOffset);
      s.scene.keypoints[idx] = p;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    s.correspondences.push_back({s.templ.features.keypoints[i], s.scene.keypoints[i], 0.0});
  }

  s.depth = render_plane_depth(plane.pose, k);
  if (noise.depth_sigma > 0.0) {
    for (double& z : s.depth.data) {
      if (z > 0.0) z = std::max(z + noise.depth_sigma * rng.normal(), 1e-6);
    }
  }

  s.ground_truth.pose = plane.pose;
  s.ground_truth.euler = euler_from_rotation(plane.pose.orientation);
  s.ground_truth.inlier_count = n - n_out;
  return s;
}

}  // namespace admsim
