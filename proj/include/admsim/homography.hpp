#pragma once

// Planar homography: application, normalized DLT and seeded RANSAC.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/SVD>

#include "admsim/camera.hpp"
#include "admsim/velocity_loop.hpp"

namespace admsim {

struct Correspondence {
  Pixel template_point;
  Pixel scene_point;
  double match_score = 0.0;
};

/// 3x3 map normalized to unit Frobenius norm with H(2,2) >= 0.
struct Homography {
  Mat3 h = Mat3::Identity() / std::sqrt(3.0);

  Homography() = default;
  explicit Homography(const Mat3& m) : h(normalized(m)) {}

  static Mat3 normalized(const Mat3& m) {
    const double n = m.norm();
    if (!(n > 0.0) || !m.allFinite()) fail(ErrorCode::DegenerateConfiguration, "homography is zero or non-finite");
    Mat3 out = m / n;
    if (out(2, 2) < 0.0) out = -out;
    return out;
  }
};

/// (a b c)' = H (x y 1)', result (a/c, b/c).
inline Pixel apply_homography(const Mat3& h, const Pixel& p) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.u, p.v, 1.0);
  if (std::abs(q.z()) <= 1e-12) fail(ErrorCode::PointAtInfinity, "point maps to infinity");
  return {q.x() / q.z(), q.y() / q.z()};
}

inline Pixel apply_homography(const Homography& h, const Pixel& p) { return apply_homography(h.h, p); }

inline double transfer_error(const Homography& h, const Correspondence& c) {
  try {
    const Pixel m = apply_homography(h, c.template_point);
    return std::hypot(m.u - c.scene_point.u, m.v - c.scene_point.v);
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace detail {

/// Hartley normalization: centroid to the origin, mean distance sqrt(2).
inline Mat3 hartley(const std::vector<Pixel>& pts) {
  double mu = 0.0, mv = 0.0;
  for (const auto& p : pts) {
    mu += p.u;
    mv += p.v;
  }
  mu /= static_cast<double>(pts.size());
  mv /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += std::hypot(p.u - mu, p.v - mv);
  d /= static_cast<double>(pts.size());
  if (!(d > 0.0)) fail(ErrorCode::DegenerateConfiguration, "coincident points");
  const double s = std::sqrt(2.0) / d;
  Mat3 t;
  t << s, 0, -s * mu, 0, s, -s * mv, 0, 0, 1;
  return t;
}

inline double triangle_area2(const Pixel& a, const Pixel& b, const Pixel& c) {
  return std::abs((b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u));
}

/// True when some three of the (four) points are collinear relative to the
/// spread of the set.
inline bool has_collinear_triple(const std::vector<Pixel>& p) {
  double scale = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) scale = std::max(scale, std::hypot(p[i].u - p[j].u, p[i].v - p[j].v));
  }
  if (!(scale > 0.0)) return true;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      for (std::size_t k = j + 1; k < p.size(); ++k) {
        if (triangle_area2(p[i], p[j], p[k]) < 1e-9 * scale * scale) return true;
      }
    }
  }
  return false;
}

}  // namespace detail

/// Least-squares DLT with Hartley normalization of both point sets.
inline Homography estimate_homography_dlt(const std::vector<Correspondence>& corr) {
  const std::size_t n = corr.size();
  if (n < 4) fail(ErrorCode::DegenerateConfiguration, "DLT needs at least 4 correspondences");
  std::vector<Pixel> src(n), dst(n);
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = corr[i].template_point;
    dst[i] = corr[i].scene_point;
  }
  if (n == 4 && (detail::has_collinear_triple(src) || detail::has_collinear_triple(dst))) {
    fail(ErrorCode::DegenerateConfiguration, "three of four points are collinear");
  }
  const Mat3 ts = detail::hartley(src), td = detail::hartley(dst);
  Eigen::MatrixXd a(2 * std::max<std::size_t>(n, 5), 9);
  a.setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].u, src[i].v, 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].u, dst[i].v, 1.0);
    const double x = p.x() / p.z(), y = p.y() / p.z(), u = q.x() / q.z(), v = q.y() / q.z();
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv[7] < 1e-10 * sv[0]) fail(ErrorCode::DegenerateConfiguration, "correspondences do not determine a homography");
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Mat3 hn;
  hn << hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8];
  if (std::abs(Homography::normalized(hn).determinant()) <= 1e-12) {
    fail(ErrorCode::DegenerateConfiguration, "estimated homography is singular");
  }
  return Homography(td.inverse() * hn * ts);
}

struct RansacParams {
  double threshold_px = 3.0;
  int max_iters = 2000;
  std::uint64_t seed = 7;
};

struct RansacResult {
  Homography h;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  double inlier_rmse = 0.0;  // px
};

/// Seeded RANSAC over minimal 4-point DLT fits, then refit on the inliers
/// until the inlier set is stable. Every returned inlier has transfer error
/// below the threshold under the returned H.
inline RansacResult ransac_homography(const std::vector<Correspondence>& corr, const RansacParams& params) {
  const std::size_t n = corr.size();
  if (n < 4) fail(ErrorCode::ConsensusFailed, "fewer than 4 correspondences");
  if (!(params.threshold_px > 0.0) || params.max_iters < 1) fail(ErrorCode::InvalidArgument, "bad RANSAC parameters");
  Rng rng(params.seed);

  auto score = [&](const Homography& h, std::vector<bool>& mask) {
    std::size_t count = 0;
    mask.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (transfer_error(h, corr[i]) < params.threshold_px) {
        mask[i] = true;
        ++count;
      }
    }
    return count;
  };

  std::size_t best_count = 0;
  Homography best;
  std::vector<bool> best_mask, mask;
  for (int it = 0; it < params.max_iters; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = static_cast<std::size_t>(rng.index(n));
        fresh = true;
        for (std::size_t m = 0; m < k; ++m) fresh = fresh && idx[m] != idx[k];
      } while (!fresh);
    }
    const std::vector<Correspondence> sample{corr[idx[0]], corr[idx[1]], corr[idx[2]], corr[idx[3]]};
    Homography h;
    try {
      h = estimate_homography_dlt(sample);
    } catch (const Error&) {
      continue;
    }
    const std::size_t count = score(h, mask);
    if (count > best_count) {
      best_count = count;
      best = h;
      best_mask = mask;
      if (count == n) break;
    }
  }
  if (best_count < 4) fail(ErrorCode::ConsensusFailed, "best consensus has fewer than 4 inliers");

  for (int refit = 0; refit < 20; ++refit) {
    std::vector<Correspondence> in;
    for (std::size_t i = 0; i < n; ++i) {
      if (best_mask[i]) in.push_back(corr[i]);
    }
    Homography h;
    try {
      h = estimate_homography_dlt(in);
    } catch (const Error&) {
      break;
    }
    const std::size_t count = score(h, mask);
    if (count < 4) break;
    const bool same = mask == best_mask;
    best = h;
    best_mask = mask;
    best_count = count;
    if (same) break;
  }
  // Final mask is always taken under the returned H.
  best_count = score(best, best_mask);
  if (best_count < 4) fail(ErrorCode::ConsensusFailed, "refit consensus has fewer than 4 inliers");

  RansacResult out{best, best_mask, best_count, 0.0};
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask[i]) {
      const double e = transfer_error(best, corr[i]);
      ss += e * e;
    }
  }
  out.inlier_rmse = std::sqrt(ss / static_cast<double>(best_count));
  return out;
}

}  // namespace admsim
