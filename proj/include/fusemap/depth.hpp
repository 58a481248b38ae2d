#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "fusemap/errors.hpp"
#include "fusemap/kdtree.hpp"
#include "fusemap/point_cloud.hpp"

namespace fusemap {

struct CameraIntrinsics {
  int width = 0, height = 0;           // pixels
  double fx = 0.0, fy = 0.0;           // focal lengths, pixels
  double cx = 0.0, cy = 0.0;           // principal point, pixels
  double depth_scale = 0.001;          // meters per raw depth unit

  void validate() const {
    if (width <= 0 || height <= 0) throw InvalidParameter("intrinsics: non-positive image size");
    if (fx <= 0.0 || fy <= 0.0) throw InvalidParameter("intrinsics: focal lengths must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
      throw InvalidParameter("intrinsics: principal point outside image");
    if (depth_scale <= 0.0) throw InvalidParameter("intrinsics: depth_scale must be positive");
  }

  /// 640x480 with fx = fy = 320/tan(43.5 deg) (87 deg horizontal field of
  /// view), millimeter raw units.
  static CameraIntrinsics synthetic_default() {
    CameraIntrinsics k;
    k.width = 640;
    k.height = 480;
    k.fx = k.fy = 320.0 / std::tan(43.5 * M_PI / 180.0);
    k.cx = 320.0;
    k.cy = 240.0;
    k.depth_scale = 0.001;
    return k;
  }
};

/// Raw 16-bit depth raster; 0 marks an invalid pixel.
struct DepthImage {
  CameraIntrinsics intrinsics;
  std::vector<std::uint16_t> values;   // row-major, width*height
  std::int64_t timestamp_us = 0;

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  std::uint16_t at(int u, int v) const { return values[static_cast<std::size_t>(v) * width() + u]; }
  std::uint16_t& at(int u, int v) { return values[static_cast<std::size_t>(v) * width() + u]; }
};

/// Pinhole deprojection into the camera frame. Invalid pixels are skipped.
inline PointCloud deproject(const DepthImage& img) {
  img.intrinsics.validate();
  const auto& k = img.intrinsics;
  PointCloud pc;
  pc.points.reserve(img.values.size() / 4);
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const std::uint16_t raw = img.at(u, v);
      if (raw == 0) continue;
      const double z = raw * k.depth_scale;
      pc.points.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
    }
  }
  return pc;
}

namespace detail {

inline std::uint16_t block_median_nonzero(std::vector<std::uint16_t>& scratch) {
  if (scratch.empty()) return 0;
  std::sort(scratch.begin(), scratch.end());
  const std::size_t n = scratch.size();
  if (n % 2 == 1) return scratch[n / 2];
  // Even count: round the midpoint to the nearest integer.
  return static_cast<std::uint16_t>(
      std::llround((scratch[n / 2 - 1] + scratch[n / 2]) / 2.0));
}

}  // namespace detail

/// Block-median decimation with intrinsics rescaling. Each output pixel is the
/// median of the nonzero raw values in its factor x factor block (0 when the
/// block holds no valid sample).
inline DepthImage decimate(const DepthImage& img, int factor) {
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8)
    throw InvalidFactor("decimation factor must be one of 1, 2, 4, 8");
  const int ow = (img.width() + factor - 1) / factor;
  const int oh = (img.height() + factor - 1) / factor;

  DepthImage out;
  out.intrinsics = img.intrinsics;
  out.intrinsics.width = ow;
  out.intrinsics.height = oh;
  out.intrinsics.fx /= factor;
  out.intrinsics.fy /= factor;
  out.intrinsics.cx /= factor;
  out.intrinsics.cy /= factor;
  out.timestamp_us = img.timestamp_us;
  out.values.assign(static_cast<std::size_t>(ow) * oh, 0);

  std::vector<std::uint16_t> scratch;
  scratch.reserve(static_cast<std::size_t>(factor) * factor);
  for (int ov = 0; ov < oh; ++ov) {
    for (int ou = 0; ou < ow; ++ou) {
      scratch.clear();
      const int v_end = std::min((ov + 1) * factor, img.height());
      const int u_end = std::min((ou + 1) * factor, img.width());
      for (int v = ov * factor; v < v_end; ++v) {
        for (int u = ou * factor; u < u_end; ++u) {
          const std::uint16_t raw = img.at(u, v);
          if (raw != 0) scratch.push_back(raw);
        }
      }
      out.at(ou, ov) = detail::block_median_nonzero(scratch);
    }
  }
  return out;
}

namespace detail {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ull;
    h ^= static_cast<std::uint64_t>(k.y) * 19349669ull;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ull;
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey voxel_of(const Eigen::Vector3d& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

}  // namespace detail

/// One output point per occupied voxel: the centroid of its members. Output
/// order follows first occupancy of each voxel, so results are reproducible.
/// Normals are dropped.
inline PointCloud voxel_downsample(const PointCloud& pc, double voxel_size) {
  if (voxel_size <= 0.0) throw InvalidParameter("voxel_size must be positive");
  struct Accum {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::size_t count = 0;
    std::size_t order = 0;
  };
  std::unordered_map<detail::VoxelKey, Accum, detail::VoxelKeyHash> grid;
  grid.reserve(pc.size());
  std::size_t next_order = 0;
  for (const auto& p : pc.points) {
    Accum& a = grid[detail::voxel_of(p, voxel_size)];
    if (a.count == 0) a.order = next_order++;
    a.sum += p;
    ++a.count;
  }
  PointCloud out;
  out.points.resize(grid.size());
  for (const auto& [key, a] : grid) out.points[a.order] = a.sum / static_cast<double>(a.count);
  return out;
}

/// Neighborhood size that keeps PCA normals stable on quantized depth data.
inline constexpr std::size_t kDefaultNormalNeighbors = 30;

/// Per-point PCA normals from the k nearest neighbors (the point itself
/// counts as one). Rank-deficient neighborhoods (two smallest covariance
/// eigenvalues below 1e-12) get a zero normal and a degenerate flag.
inline PointCloud estimate_normals(const PointCloud& pc, std::size_t k,
                                   const Eigen::Vector3d& viewpoint) {
  if (k < 3) throw InvalidParameter("normal estimation needs k >= 3");
  if (pc.size() < k)
    throw TooFewPoints("cloud has " + std::to_string(pc.size()) + " points, need at least " +
                       std::to_string(k));
  const KdTree tree(pc.points);
  PointCloud out;
  out.points = pc.points;
  out.normals.resize(pc.size());
  out.degenerate.assign(pc.size(), 0);

  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto neighbors = tree.knn(pc.points[i], k);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& nb : neighbors) mean += pc.points[nb.index];
    mean /= static_cast<double>(neighbors.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : neighbors) {
      const Eigen::Vector3d d = pc.points[nb.index] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(neighbors.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
    if (evals[0] < 1e-12 && evals[1] < 1e-12) {
      out.normals[i].setZero();
      out.degenerate[i] = 1;
      continue;
    }
    Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - pc.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

/// Edge-preserving smoothing: a two-direction 1D exponential recursion
/// y[i] = alpha*x[i] + (1-alpha)*y[i-1], run over rows then columns each
/// iteration, restarted at depth discontinuities larger than delta raw units
/// and at invalid pixels. Invalid pixels stay 0.
inline DepthImage spatial_filter(const DepthImage& img, double alpha, double delta,
                                 int iterations) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("spatial filter: alpha must be in (0, 1]");
  if (delta < 0.0) throw InvalidParameter("spatial filter: delta must be non-negative");
  if (iterations < 1) throw InvalidParameter("spatial filter: iterations must be >= 1");

  const int w = img.width(), h = img.height();
  const std::size_t n = img.values.size();
  std::vector<double> cur(n), next(n);
  std::vector<std::uint8_t> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    cur[i] = img.values[i];
    valid[i] = img.values[i] != 0;
  }

  // One recursion along a pixel sequence given by (start, stride, count),
  // reading cur and writing next.
  const auto filter_line = [&](std::size_t start, std::ptrdiff_t stride, int count) {
    double prev_x = 0.0, prev_y = 0.0;
    bool prev_valid = false;
    std::size_t idx = start;
    for (int i = 0; i < count; ++i, idx += stride) {
      const double x = cur[idx];
      if (!valid[idx]) {
        next[idx] = 0.0;
        prev_valid = false;
      } else if (!prev_valid || std::abs(x - prev_x) > delta) {
        next[idx] = x;
        prev_valid = true;
      } else {
        next[idx] = alpha * x + (1.0 - alpha) * prev_y;
        prev_valid = true;
      }
      prev_x = x;
      prev_y = next[idx];
    }
  };

  enum class Dir { left_right, right_left, top_bottom, bottom_top };
  const auto pass = [&](Dir dir) {
    switch (dir) {
      case Dir::left_right:
        for (int v = 0; v < h; ++v) filter_line(static_cast<std::size_t>(v) * w, 1, w);
        break;
      case Dir::right_left:
        for (int v = 0; v < h; ++v) filter_line(static_cast<std::size_t>(v) * w + w - 1, -1, w);
        break;
      case Dir::top_bottom:
        for (int u = 0; u < w; ++u) filter_line(static_cast<std::size_t>(u), w, h);
        break;
      case Dir::bottom_top:
        for (int u = 0; u < w; ++u)
          filter_line(static_cast<std::size_t>(u) + static_cast<std::size_t>(h - 1) * w, -w, h);
        break;
    }
    std::swap(cur, next);
  };

  for (int it = 0; it < iterations; ++it) {
    pass(Dir::left_right);
    pass(Dir::right_left);
    pass(Dir::top_bottom);
    pass(Dir::bottom_top);
  }

  DepthImage out = img;
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = valid[i] ? static_cast<std::uint16_t>(
                                   std::clamp<long long>(std::llround(cur[i]), 0, 65535))
                             : 0;
  }
  return out;
}

}  // namespace fusemap
