#pragma once

// Template-to-scene object pose: match, RANSAC homography, map the three
// template reference points into the scene, lift them with depth and build
// the object frame.

#include <array>
#include <string>

#include "admsim/features.hpp"

namespace admsim {

struct ReferencePoints {
  Pixel center;
  Pixel x_axis;
  Pixel y_axis;
};

inline ReferencePoints reference_points(double w, double h) {
  if (!(w > 0.0) || !(h > 0.0)) fail(ErrorCode::InvalidArgument, "template dimensions must be positive");
  return {{w / 2.0, h / 2.0}, {w, h / 2.0}, {w / 2.0, 0.0}};
}

struct Template {
  FeatureSet features;
  double width_px = 0.0;
  double height_px = 0.0;
  double scale = 0.0;  // m per template pixel; 0 when unknown
};

struct ObjectPose {
  Pose pose;
  EulerAngles euler;
  std::size_t inlier_count = 0;
  double reprojection_rmse = 0.0;  // px
};

struct PoseEstimationParams {
  double ratio = 0.75;
  RansacParams ransac;
};

namespace detail {

template <class F>
auto stage(const char* label, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(label) + ": " + e.detail());
  }
}

}  // namespace detail

/// Pose from already-established correspondences.
inline ObjectPose pose_from_correspondences(const std::vector<Correspondence>& corr, double template_w,
                                            double template_h, const DepthMap& depth, const CameraIntrinsics& k,
                                            const RansacParams& ransac) {
  k.validate();
  const RansacResult fit = detail::stage("ransac", [&] { return ransac_homography(corr, ransac); });
  const ReferencePoints ref = detail::stage("reference points", [&] { return reference_points(template_w, template_h); });
  const std::array<Pixel, 3> scene_px = detail::stage("transform", [&] {
    return std::array<Pixel, 3>{apply_homography(fit.h, ref.center), apply_homography(fit.h, ref.x_axis),
                                apply_homography(fit.h, ref.y_axis)};
  });
  const std::array<Vec3, 3> p3 = detail::stage("depth", [&] {
    return std::array<Vec3, 3>{backproject(scene_px[0], depth, k), backproject(scene_px[1], depth, k),
                               backproject(scene_px[2], depth, k)};
  });
  ObjectPose out;
  detail::stage("frame", [&] {
    const Frame f = orthonormal_frame(p3[1] - p3[0], p3[2] - p3[0]);
    out.pose.orientation = rotation_from_axes(f.i, f.j, f.k);
    out.pose.position = p3[0];
    out.euler = euler_from_rotation(out.pose.orientation);
    return 0;
  });
  out.inlier_count = fit.inlier_count;
  out.reprojection_rmse = fit.inlier_rmse;
  return out;
}

inline ObjectPose estimate_object_pose(const Template& tmpl, const FeatureSet& scene, const DepthMap& depth,
                                       const CameraIntrinsics& k, const PoseEstimationParams& params = {}) {
  const auto corr = detail::stage("match", [&] { return match_features(tmpl.features, scene, params.ratio); });
  return pose_from_correspondences(corr, tmpl.width_px, tmpl.height_px, depth, k, params.ransac);
}

}  // namespace admsim
