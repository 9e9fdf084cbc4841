#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "admsim/scene.hpp"

using namespace admsim;

namespace {

Mat3 random_homography(Rng& rng) {
  Mat3 h;
  h << rng.uniform(0.8, 1.2), rng.uniform(-0.2, 0.2), rng.uniform(-50, 50),  //
      rng.uniform(-0.2, 0.2), rng.uniform(0.8, 1.2), rng.uniform(-50, 50),   //
      rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0;
  return h;
}

std::vector<Correspondence> mapped(const Mat3& h, const std::vector<Pixel>& src) {
  std::vector<Correspondence> out;
  for (const auto& p : src) out.push_back({p, apply_homography(h, p), 0.0});
  return out;
}

std::vector<Pixel> random_pixels(Rng& rng, std::size_t n) {
  std::vector<Pixel> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({rng.uniform(0, 640), rng.uniform(0, 480)});
  return out;
}

double max_abs_diff(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Plane facing the camera (plane z toward the lens), centred on the optical axis.
Pose facing_plane(double z, double tilt_x = 0.0, double tilt_y = 0.0) {
  Pose p;
  p.position = Vec3(0, 0, z);
  p.orientation = (Eigen::AngleAxisd(tilt_x, Vec3::UnitX()) * Eigen::AngleAxisd(tilt_y, Vec3::UnitY()) *
                   Eigen::AngleAxisd(kPi, Vec3::UnitX()))
                      .toRotationMatrix();
  return p;
}

ObjectPose run_pipeline(const SyntheticScene& s) {
  return estimate_object_pose(s.templ, s.scene, s.depth, s.intrinsics);
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(ApplyHomography, IdentityAndTranslation) {
  const Pixel p = apply_homography(Mat3::Identity(), {3.5, -7.0});
  EXPECT_EQ(p.u, 3.5);
  EXPECT_EQ(p.v, -7.0);
  Mat3 t = Mat3::Identity();
  t(0, 2) = 3;
  t(1, 2) = -2;
  const Pixel q = apply_homography(Homography(t), {10, 20});
  EXPECT_NEAR(q.u, 13.0, 1e-12);
  EXPECT_NEAR(q.v, 18.0, 1e-12);
}

TEST(ApplyHomography, PerspectiveRowHandEvaluated) {
  Mat3 h = Mat3::Identity();
  h(2, 0) = 0.1;
  for (const Homography& hh : {Homography(h), Homography(-3.0 * h)}) {
    const Pixel p = apply_homography(hh, {2, 4});
    EXPECT_NEAR(p.u, 2.0 / 1.2, 1e-12);
    EXPECT_NEAR(p.v, 4.0 / 1.2, 1e-12);
  }
}

TEST(ApplyHomography, PointAtInfinity) {
  Mat3 h = Mat3::Identity();
  h(2, 0) = -0.5;
  try {
    apply_homography(h, {2, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PointAtInfinity);
  }
}

TEST(Homography, NormalizationConvention) {
  Mat3 m = Mat3::Identity();
  m(0, 2) = 4;
  const Homography h(-2.0 * m);
  EXPECT_NEAR(h.h.norm(), 1.0, 1e-15);
  EXPECT_GE(h.h(2, 2), 0.0);
  EXPECT_LT(max_abs_diff(h.h, Homography(m).h), 1e-15);
}

TEST(Dlt, RecoversRandomHomographyFromFourPoints) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 truth = random_homography(rng);
    const std::vector<Pixel> src{{rng.uniform(0, 100), rng.uniform(0, 100)},
                                 {rng.uniform(500, 600), rng.uniform(0, 100)},
                                 {rng.uniform(500, 600), rng.uniform(400, 480)},
                                 {rng.uniform(0, 100), rng.uniform(400, 480)}};
    const auto corr = mapped(truth, src);
    const Homography est = estimate_homography_dlt(corr);
    EXPECT_LT(max_abs_diff(est.h, Homography(truth).h), 1e-9);
    for (const auto& c : corr) EXPECT_LT(transfer_error(est, c), 1e-9);
  }
}

TEST(Dlt, IdentityCorrespondences) {
  Rng rng(6);
  const auto corr = mapped(Mat3::Identity(), random_pixels(rng, 12));
  EXPECT_LT(max_abs_diff(estimate_homography_dlt(corr).h, Homography(Mat3::Identity()).h), 1e-12);
}

TEST(Dlt, DegenerateInputs) {
  const std::vector<Pixel> line{{0, 0}, {1, 1}, {2, 2}, {5, 5}};
  const std::vector<Pixel> three_on_line{{0, 0}, {10, 0}, {20, 0}, {5, 9}};
  for (const auto& pts : {line, three_on_line}) {
    try {
      estimate_homography_dlt(mapped(Mat3::Identity(), pts));
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DegenerateConfiguration);
    }
  }
  EXPECT_THROW(estimate_homography_dlt(mapped(Mat3::Identity(), {{0, 0}, {1, 0}, {0, 1}})), Error);
}

TEST(Dlt, ScaleInvarianceOfResiduals) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat3 truth = random_homography(rng);
    auto corr = mapped(truth, random_pixels(rng, 25));
    for (auto& c : corr) {
      c.scene_point.u += rng.normal();
      c.scene_point.v += rng.normal();
    }
    const Homography base = estimate_homography_dlt(corr);
    for (double s : {1e-3, 0.37, 12.0, 4e3}) {
      auto scaled = corr;
      for (auto& c : scaled) {
        c.template_point = {s * c.template_point.u, s * c.template_point.v};
        c.scene_point = {s * c.scene_point.u, s * c.scene_point.v};
      }
      const Homography hs = estimate_homography_dlt(scaled);
      const Mat3 sm = Eigen::Vector3d(s, s, 1).asDiagonal();
      const Mat3 rederived = sm.inverse() * hs.h * sm;
      EXPECT_LT(max_abs_diff(Homography(rederived).h, base.h), 1e-9);
      for (std::size_t i = 0; i < corr.size(); ++i) {
        EXPECT_NEAR(transfer_error(hs, scaled[i]) / s, transfer_error(base, corr[i]), 1e-9);
      }
    }
  }
}

TEST(Ransac, AllInliersNoiseless) {
  Rng rng(9);
  const Mat3 truth = random_homography(rng);
  const auto corr = mapped(truth, random_pixels(rng, 40));
  const RansacResult r = ransac_homography(corr, {});
  EXPECT_EQ(r.inlier_count, corr.size());
  EXPECT_TRUE(std::all_of(r.inliers.begin(), r.inliers.end(), [](bool b) { return b; }));
  EXPECT_LT(max_abs_diff(r.h.h, Homography(truth).h), 1e-9);
}

TEST(Ransac, PlantedOutliersExcluded) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 truth = random_homography(rng);
    auto corr = mapped(truth, random_pixels(rng, 100));
    std::vector<bool> planted(corr.size(), false);
    for (std::size_t i = 0; i < 30; ++i) {
      const std::size_t idx = 3 * i + 1;
      planted[idx] = true;
      Pixel p;
      do {
        p = {rng.uniform(0, 640), rng.uniform(0, 480)};
      } while (std::hypot(p.u - corr[idx].scene_point.u, p.v - corr[idx].scene_point.v) < 20.0);
      corr[idx].scene_point = p;
    }
    const RansacResult r = ransac_homography(corr, {3.0, 2000, 7});
    for (std::size_t i = 0; i < corr.size(); ++i) {
      if (planted[i]) {
        EXPECT_FALSE(r.inliers[i]) << i;
      } else {
        EXPECT_TRUE(r.inliers[i]) << i;
        EXPECT_LT(transfer_error(r.h, corr[i]), 1e-6);
      }
    }
    EXPECT_EQ(r.inlier_count, 70u);
  }
}

TEST(Ransac, RmseBelowThresholdAndDeterministic) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 truth = random_homography(rng);
    auto corr = mapped(truth, random_pixels(rng, 60));
    for (auto& c : corr) {
      c.scene_point.u += 1.5 * rng.normal();
      c.scene_point.v += 1.5 * rng.normal();
    }
    for (std::size_t i = 0; i < 15; ++i) corr[i].scene_point = {rng.uniform(0, 640), rng.uniform(0, 480)};
    const RansacParams params{2.0, 500, static_cast<std::uint64_t>(trial)};
    const RansacResult a = ransac_homography(corr, params);
    const RansacResult b = ransac_homography(corr, params);
    EXPECT_LE(a.inlier_rmse, params.threshold_px);
    EXPECT_EQ(a.h.h, b.h.h);
    EXPECT_EQ(a.inliers, b.inliers);
    for (std::size_t i = 0; i < corr.size(); ++i) {
      if (a.inliers[i]) EXPECT_LT(transfer_error(a.h, corr[i]), params.threshold_px);
    }
  }
}

TEST(Ransac, TooFewCorrespondences) {
  const auto corr = mapped(Mat3::Identity(), {{0, 0}, {1, 0}, {0, 1}});
  try {
    ransac_homography(corr, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConsensusFailed);
  }
}

// ---------------------------------------------------------------------------

namespace {

FeatureSet coded_set(std::size_t n) {
  FeatureSet f;
  for (std::size_t i = 0; i < n; ++i) {
    f.keypoints.push_back({static_cast<double>(i), 2.0 * static_cast<double>(i)});
    f.descriptors.push_back(id_descriptor(i));
  }
  return f;
}

}  // namespace

TEST(MatchFeatures, IdenticalSetsGiveIdentity) {
  const FeatureSet f = coded_set(20);
  const auto m = match_features(f, f);
  ASSERT_EQ(m.size(), 20u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m[i].template_point.u, m[i].scene_point.u);
    EXPECT_EQ(m[i].template_point.v, m[i].scene_point.v);
    EXPECT_EQ(m[i].match_score, 0.0);
  }
}

TEST(MatchFeatures, EquidistantIsRejected) {
  FeatureSet t = coded_set(5), s = coded_set(5);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kDescriptorBits);
  d[0] = 1.0;
  t.keypoints.push_back({100, 100});
  t.descriptors.push_back(d);
  Eigen::VectorXd a = d, b = d;
  a[1] = 0.5;
  b[1] = -0.5;
  s.keypoints.push_back({7, 7});
  s.descriptors.push_back(a);
  s.keypoints.push_back({8, 8});
  s.descriptors.push_back(b);
  const auto m = match_features(t, s);
  EXPECT_EQ(m.size(), 5u);
  for (const auto& c : m) EXPECT_NE(c.template_point.u, 100.0);
}

TEST(MatchFeatures, PlantedMatchesAmongDistractors) {
  Rng rng(21);
  const int dim = 16;
  FeatureSet t, s;
  std::vector<std::size_t> scene_index;
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd d(dim);
    for (int k = 0; k < dim; ++k) d[k] = rng.uniform(-10, 10);
    t.keypoints.push_back({static_cast<double>(i), 0});
    t.descriptors.push_back(d);
  }
  // Planted partner at distance 1, distractors at distance >= 2.
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd dir(dim);
    for (int k = 0; k < dim; ++k) dir[k] = rng.normal();
    s.keypoints.push_back({static_cast<double>(i), 1});
    s.descriptors.push_back(t.descriptors[static_cast<std::size_t>(i)] + dir.normalized());
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < dim; ++k) dir[k] = rng.normal();
      s.keypoints.push_back({static_cast<double>(i), 99});
      s.descriptors.push_back(t.descriptors[static_cast<std::size_t>(i)] + rng.uniform(2.0, 3.0) * dir.normalized());
    }
  }
  const auto m = match_features(t, s, 0.75);
  // The planted partner must be the best and pass the ratio test whenever
  // every other scene descriptor is at least 2x as far.
  std::size_t expected = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j != 4 * i) second = std::min(second, (t.descriptors[i] - s.descriptors[j]).norm());
    }
    if (second >= 2.0) ++expected;
  }
  EXPECT_EQ(expected, t.size());
  ASSERT_EQ(m.size(), expected);
  for (const auto& c : m) {
    EXPECT_EQ(c.template_point.u, c.scene_point.u);
    EXPECT_EQ(c.scene_point.v, 1.0);
  }
}

TEST(MatchFeatures, HammingForBinary) {
  FeatureSet t, s;
  t.binary = s.binary = true;
  for (std::size_t i = 0; i < 8; ++i) {
    Eigen::VectorXd d = (id_descriptor(i * 37).array() > 0).cast<double>();
    t.keypoints.push_back({static_cast<double>(i), 0});
    t.descriptors.push_back(d);
    s.keypoints.push_back({static_cast<double>(i), 5});
    s.descriptors.push_back(d);
  }
  const Eigen::VectorXd a = t.descriptors[0], b = t.descriptors[1];
  EXPECT_DOUBLE_EQ(descriptor_distance(a, b, true), static_cast<double>((a.array() != b.array()).count()));
  EXPECT_EQ(match_features(t, s).size(), 8u);
}

TEST(MatchFeatures, Preconditions) {
  FeatureSet t = coded_set(3);
  EXPECT_THROW(match_features(t, t, 1.0), Error);
  try {
    match_features(t, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewMatches);
  }
  FeatureSet bad = coded_set(6);
  bad.descriptors.pop_back();
  EXPECT_THROW(match_features(bad, coded_set(6)), Error);
}

// ---------------------------------------------------------------------------

TEST(ReferencePoints, Substitution) {
  const auto r = reference_points(200, 100);
  EXPECT_EQ(r.center.u, 100);
  EXPECT_EQ(r.center.v, 50);
  EXPECT_EQ(r.x_axis.u, 200);
  EXPECT_EQ(r.x_axis.v, 50);
  EXPECT_EQ(r.y_axis.u, 100);
  EXPECT_EQ(r.y_axis.v, 0);
  const auto s = reference_points(2, 2);
  EXPECT_EQ(s.center.u, 1);
  EXPECT_EQ(s.x_axis.u, 2);
  EXPECT_EQ(s.y_axis.v, 0);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto q = reference_points(rng.uniform(1, 2000), rng.uniform(1, 2000));
    EXPECT_EQ(q.x_axis.v, q.center.v);
    EXPECT_EQ(q.y_axis.u, q.center.u);
  }
  EXPECT_THROW(reference_points(0, 1), Error);
}

TEST(Backproject, PrincipalPointAndPinholeArithmetic) {
  CameraIntrinsics k;
  DepthMap one(640, 480);
  std::fill(one.data.begin(), one.data.end(), 1.0);
  const Vec3 c = backproject({k.cx, k.cy}, one, k);
  EXPECT_EQ(c, Vec3(0, 0, 1));

  CameraIntrinsics wide = k;
  wide.width = 1280;
  DepthMap two(1280, 480);
  std::fill(two.data.begin(), two.data.end(), 2.0);
  const Vec3 p = backproject({920, 240}, two, wide);
  EXPECT_NEAR(p.x(), 2.0, 1e-15);
  EXPECT_NEAR(p.y(), 0.0, 1e-15);
  EXPECT_NEAR(p.z(), 2.0, 1e-15);
}

TEST(Backproject, NoDepthAndMedianFallback) {
  CameraIntrinsics k;
  DepthMap d(640, 480);
  try {
    backproject({100, 100}, d, k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoDepth);
  }
  EXPECT_THROW(backproject({-1, 0}, d, k), Error);
  // Hole at the pixel, valid ring inside the 5x5 window.
  d.at(98, 100) = 1.0;
  d.at(102, 100) = 3.0;
  d.at(100, 102) = 2.0;
  EXPECT_DOUBLE_EQ(depth_at(d, {100.2, 99.9}), 2.0);
  d.at(100, 98) = 4.0;
  EXPECT_DOUBLE_EQ(depth_at(d, {100, 100}), 2.5);
  EXPECT_THROW(depth_at(d, {110, 110}), Error);
}

TEST(Backproject, SubpixelDepthExactOnPlanes) {
  CameraIntrinsics k;
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose plane = facing_plane(rng.uniform(0.4, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const DepthMap d = render_plane_depth(plane, k);
    const Vec3 n = plane.orientation.col(2);
    for (int i = 0; i < 20; ++i) {
      const Pixel px{rng.uniform(10, 630), rng.uniform(10, 470)};
      const Vec3 p = backproject(px, d, k);
      EXPECT_NEAR(n.dot(p - plane.position), 0.0, 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------

TEST(PoseEstimation, FrontoParallelPlane) {
  const SyntheticScene s = generate_scene({facing_plane(0.6)}, {}, {});
  const ObjectPose est = run_pipeline(s);
  EXPECT_LT((est.pose.position - s.ground_truth.pose.position).norm(), 1e-6);
  EXPECT_LT(rotation_distance(est.pose.orientation, s.ground_truth.pose.orientation), 1e-6);
  EXPECT_EQ(est.inlier_count, s.scene.size());
  EXPECT_LT(est.reprojection_rmse, 1e-9);
}

TEST(PoseEstimation, PlaneTiltedThirtyDegrees) {
  const SyntheticScene s = generate_scene({facing_plane(0.6, deg_to_rad(30))}, {}, {});
  const ObjectPose est = run_pipeline(s);
  EXPECT_NEAR(est.euler.phi, s.ground_truth.euler.phi, 1e-6);
  EXPECT_NEAR(est.euler.theta, s.ground_truth.euler.theta, 1e-6);
  EXPECT_NEAR(est.euler.psi, s.ground_truth.euler.psi, 1e-6);
  EXPECT_LT((est.pose.position - s.ground_truth.pose.position).norm(), 1e-6);
}

TEST(PoseEstimation, NoiselessRecoveryAcrossTilts) {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const double tilt = deg_to_rad(rng.uniform(0, 74.9));
    const double azimuth = rng.uniform(-kPi, kPi);
    const Vec3 axis(std::cos(azimuth), std::sin(azimuth), 0);
    PlaneSpec spec;
    spec.pose.position = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.08, 0.08), rng.uniform(0.5, 0.9));
    spec.pose.orientation = so3_exp(tilt * axis) * so3_exp({kPi, 0, 0}) * so3_exp({0, 0, rng.uniform(-kPi, kPi)});
    const SyntheticScene s = generate_scene(spec, {}, {});
    const ObjectPose est = run_pipeline(s);
    EXPECT_LT((est.pose.position - spec.pose.position).norm(), 1e-6) << "trial " << trial;
    EXPECT_LT(rotation_distance(est.pose.orientation, spec.pose.orientation), 1e-6) << "trial " << trial;
  }
}

TEST(PoseEstimation, TranslationEquivariance) {
  PlaneSpec spec;
  spec.pose = facing_plane(0.7, 0.3, -0.2);
  const ObjectPose base = run_pipeline(generate_scene(spec, {}, {}));
  Rng rng(13);
  for (int i = 0; i < 10; ++i) {
    const Vec3 t(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.1, 0.2));
    PlaneSpec moved = spec;
    moved.pose.position += t;
    const ObjectPose est = run_pipeline(generate_scene(moved, {}, {}));
    EXPECT_LT((est.pose.position - (base.pose.position + t)).norm(), 1e-6);
  }
}

TEST(PoseEstimation, OutliersDoNotMoveTheEstimate) {
  NoiseSpec noise;
  noise.outlier_rate = 0.3;
  noise.seed = 4;
  const SyntheticScene s = generate_scene({facing_plane(0.6, 0.4)}, {}, noise);
  const ObjectPose est = run_pipeline(s);
  EXPECT_EQ(est.inlier_count, s.scene.size() - s.outlier_indices.size());
  EXPECT_LT((est.pose.position - s.ground_truth.pose.position).norm(), 1e-6);
  EXPECT_LT(rotation_distance(est.pose.orientation, s.ground_truth.pose.orientation), 1e-6);
}

TEST(PoseEstimation, NoiseEnvelopeMedianPositionError) {
  std::vector<double> errors;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    NoiseSpec noise;
    noise.keypoint_sigma = 0.5;
    noise.depth_sigma = 0.002;
    noise.seed = seed;
    const SyntheticScene s = generate_scene({facing_plane(0.6, 0.2)}, {}, noise);
    errors.push_back((run_pipeline(s).pose.position - s.ground_truth.pose.position).norm());
  }
  std::nth_element(errors.begin(), errors.begin() + 50, errors.end());
  EXPECT_LE(errors[50], 0.0061);
}

TEST(PoseEstimation, ErrorsCarryStageLabels) {
  SyntheticScene s = generate_scene({facing_plane(0.6)}, {}, {});
  std::fill(s.depth.data.begin(), s.depth.data.end(), 0.0);
  try {
    run_pipeline(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoDepth);
    EXPECT_EQ(e.detail().rfind("depth: ", 0), 0u) << e.what();
  }
  FeatureSet ambiguous = s.scene;
  for (auto& d : ambiguous.descriptors) d.setZero();
  try {
    estimate_object_pose(s.templ, ambiguous, s.depth, s.intrinsics);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewMatches);
    EXPECT_EQ(e.detail().rfind("match: ", 0), 0u);
  }
}

// ---------------------------------------------------------------------------

TEST(Harris, FindsCheckerboardCornersAndRoundTripsPgm) {
  GrayImage img(160, 120);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const bool inside = u >= 40 && u < 120 && v >= 20 && v < 100;
      img.at(u, v) = inside && (((u - 40) / 40 + (v - 20) / 40) % 2 == 0) ? 1.0 : 0.2;
    }
  }
  const auto path = std::filesystem::temp_directory_path() / "admsim_harris.pgm";
  write_pgm(img, path.string());
  const GrayImage back = read_pgm(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(back.width, 160);
  ASSERT_EQ(back.height, 120);
  for (std::size_t i = 0; i < img.data.size(); ++i) ASSERT_NEAR(back.data[i], img.data[i], 0.5 / 255.0);

  const FeatureSet f = detect_harris(back);
  ASSERT_GE(f.size(), 4u);
  // Outer corners of the two bright squares and the central junction.
  const std::vector<Pixel> corners{{39.5, 19.5}, {119.5, 99.5}, {79.5, 59.5}};
  for (const auto& c : corners) {
    double best = 1e9;
    for (const auto& k : f.keypoints) best = std::min(best, std::hypot(k.u - c.u, k.v - c.v));
    EXPECT_LE(best, 2.5) << c.u << "," << c.v;
  }
  for (const auto& d : f.descriptors) EXPECT_NEAR(d.norm(), 1.0, 1e-12);
}
