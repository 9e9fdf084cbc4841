#pragma once

// Keypoints, descriptors and ratio-test matching; a Harris corner detector
// with normalized patch descriptors for real grayscale images.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "admsim/homography.hpp"

namespace admsim {

struct FeatureSet {
  std::vector<Pixel> keypoints;
  std::vector<Eigen::VectorXd> descriptors;
  bool binary = false;  // entries are 0/1 bits compared by Hamming distance

  [[nodiscard]] std::size_t size() const { return keypoints.size(); }

  void validate() const {
    if (keypoints.size() != descriptors.size()) {
      fail(ErrorCode::InvalidArgument, "keypoint and descriptor counts differ");
    }
    for (const auto& d : descriptors) {
      if (!descriptors.empty() && d.size() != descriptors.front().size()) {
        fail(ErrorCode::InvalidArgument, "descriptor lengths differ");
      }
    }
  }
};

inline double descriptor_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, bool binary) {
  if (!binary) return (a - b).norm();
  double d = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) d += (a[i] != b[i]) ? 1.0 : 0.0;
  return d;
}

/// Exact nearest neighbour with Lowe's ratio test: keep a match only when
/// best < ratio * second best.
inline std::vector<Correspondence> match_features(const FeatureSet& tmpl, const FeatureSet& scene, double ratio = 0.75) {
  tmpl.validate();
  scene.validate();
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorCode::InvalidArgument, "ratio must be in (0, 1)");
  if (tmpl.binary != scene.binary) fail(ErrorCode::InvalidArgument, "descriptor kinds differ");
  if (!tmpl.descriptors.empty() && !scene.descriptors.empty() &&
      tmpl.descriptors.front().size() != scene.descriptors.front().size()) {
    fail(ErrorCode::InvalidArgument, "descriptor lengths differ between sets");
  }
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    double best = std::numeric_limits<double>::infinity(), second = best;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < scene.size(); ++j) {
      const double d = descriptor_distance(tmpl.descriptors[i], scene.descriptors[j], tmpl.binary);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    if (std::isfinite(best) && best < ratio * second) {
      out.push_back({tmpl.keypoints[i], scene.keypoints[best_j], best});
    }
  }
  if (out.size() < 4) {
    fail(ErrorCode::TooFewMatches, "only " + std::to_string(out.size()) + " matches pass the ratio test");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grayscale images

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major, [0, 1]

  GrayImage() = default;
  GrayImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0) {}

  [[nodiscard]] double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }

  [[nodiscard]] double clamped(int u, int v) const {
    return at(std::clamp(u, 0, width - 1), std::clamp(v, 0, height - 1));
  }

  [[nodiscard]] double bilinear(double u, double v) const {
    const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
    const double a = u - u0, b = v - v0;
    return (1 - a) * (1 - b) * clamped(u0, v0) + a * (1 - b) * clamped(u0 + 1, v0) +
           (1 - a) * b * clamped(u0, v0 + 1) + a * b * clamped(u0 + 1, v0 + 1);
  }
};

/// Binary (P5) or ASCII (P2) PGM, 8 or 16 bit.
inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot open image " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") fail(ErrorCode::ParseError, path + ": not a PGM file");
  auto next_int = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return std::stoi(tok);
    }
    fail(ErrorCode::ParseError, path + ": truncated PGM header");
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) fail(ErrorCode::ParseError, path + ": bad PGM header");
  GrayImage img(w, h);
  if (magic == "P2") {
    for (auto& px : img.data) {
      int v;
      if (!(in >> v)) fail(ErrorCode::ParseError, path + ": truncated PGM data");
      px = static_cast<double>(v) / maxval;
    }
    return img;
  }
  in.get();
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) fail(ErrorCode::ParseError, path + ": truncated PGM data");
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const int v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img.data[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ConfigError, "cannot write image " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.data) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
}

struct HarrisParams {
  double k = 0.04;
  int window_radius = 2;
  double relative_threshold = 0.01;
  int nms_radius = 4;
  int max_features = 500;
  int patch_radius = 4;
};

/// Harris corners (Sobel gradients, box-windowed structure tensor, non-max
/// suppression) with mean-removed unit-norm patch descriptors.
inline FeatureSet detect_harris(const GrayImage& img, const HarrisParams& p = {}) {
  const int w = img.width, h = img.height;
  std::vector<double> ix(img.data.size(), 0.0), iy(img.data.size(), 0.0), r(img.data.size(), 0.0);
  auto idx = [w](int u, int v) { return static_cast<std::size_t>(v) * w + u; };
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      ix[idx(u, v)] = (img.clamped(u + 1, v - 1) + 2 * img.clamped(u + 1, v) + img.clamped(u + 1, v + 1) -
                       img.clamped(u - 1, v - 1) - 2 * img.clamped(u - 1, v) - img.clamped(u - 1, v + 1)) / 8.0;
      iy[idx(u, v)] = (img.clamped(u - 1, v + 1) + 2 * img.clamped(u, v + 1) + img.clamped(u + 1, v + 1) -
                       img.clamped(u - 1, v - 1) - 2 * img.clamped(u, v - 1) - img.clamped(u + 1, v - 1)) / 8.0;
    }
  }
  double r_max = 0.0;
  const int wr = p.window_radius;
  const int border = std::max(wr, p.patch_radius) + 1;
  for (int v = border; v < h - border; ++v) {
    for (int u = border; u < w - border; ++u) {
      double sxx = 0, syy = 0, sxy = 0;
      for (int dv = -wr; dv <= wr; ++dv) {
        for (int du = -wr; du <= wr; ++du) {
          const double gx = ix[idx(u + du, v + dv)], gy = iy[idx(u + du, v + dv)];
          sxx += gx * gx;
          syy += gy * gy;
          sxy += gx * gy;
        }
      }
      const double resp = sxx * syy - sxy * sxy - p.k * (sxx + syy) * (sxx + syy);
      r[idx(u, v)] = resp;
      r_max = std::max(r_max, resp);
    }
  }
  struct Cand {
    double resp;
    int u, v;
  };
  std::vector<Cand> cands;
  const double thr = p.relative_threshold * r_max;
  for (int v = border; v < h - border; ++v) {
    for (int u = border; u < w - border; ++u) {
      const double c = r[idx(u, v)];
      if (!(c > thr)) continue;
      bool is_max = true;
      for (int dv = -p.nms_radius; dv <= p.nms_radius && is_max; ++dv) {
        for (int du = -p.nms_radius; du <= p.nms_radius; ++du) {
          const int uu = u + du, vv = v + dv;
          if ((du || dv) && uu >= 0 && vv >= 0 && uu < w && vv < h) {
            const double o = r[idx(uu, vv)];
            // Ties resolve to the first pixel in raster order.
            if (o > c || (o == c && (vv < v || (vv == v && uu < u)))) {
              is_max = false;
              break;
            }
          }
        }
      }
      if (is_max) cands.push_back({c, u, v});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.resp > b.resp; });
  if (static_cast<int>(cands.size()) > p.max_features) cands.resize(static_cast<std::size_t>(p.max_features));

  FeatureSet fs;
  const int pr = p.patch_radius, side = 2 * pr + 1;
  for (const auto& c : cands) {
    Eigen::VectorXd d(side * side);
    int k = 0;
    for (int dv = -pr; dv <= pr; ++dv) {
      for (int du = -pr; du <= pr; ++du) d[k++] = img.clamped(c.u + du, c.v + dv);
    }
    d.array() -= d.mean();
    const double n = d.norm();
    if (n > 0.0) d /= n;
    fs.keypoints.push_back({static_cast<double>(c.u), static_cast<double>(c.v)});
    fs.descriptors.push_back(d);
  }
  return fs;
}

}  // namespace admsim
