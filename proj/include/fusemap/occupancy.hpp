#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "fusemap/depth.hpp"
#include "fusemap/errors.hpp"
#include "fusemap/sync.hpp"
#include "fusemap/trajectory.hpp"

namespace fusemap {

/// Amanatides-Woo voxel traversal: every grid cell the segment passes
/// through, ordered from the origin's cell to the endpoint's cell (both
/// included). Consecutive cells differ by one step along exactly one axis.
inline std::vector<Eigen::Vector3i> traverse_ray(const Eigen::Vector3d& origin,
                                                 const Eigen::Vector3d& end, double resolution) {
  if (!(resolution > 0.0)) throw InvalidParameter("resolution must be > 0");
  const auto cell = [&](const Eigen::Vector3d& p) {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / resolution)),
                           static_cast<int>(std::floor(p.y() / resolution)),
                           static_cast<int>(std::floor(p.z() / resolution)));
  };
  Eigen::Vector3i cur = cell(origin);
  const Eigen::Vector3i target = cell(end);
  std::vector<Eigen::Vector3i> out = {cur};

  const Eigen::Vector3d d = end - origin;
  Eigen::Vector3i step = Eigen::Vector3i::Zero();
  Eigen::Vector3d t_next;
  Eigen::Vector3d t_delta;
  for (int a = 0; a < 3; ++a) {
    if (d[a] > 0.0) {
      step[a] = 1;
      t_delta[a] = resolution / d[a];
      t_next[a] = ((cur[a] + 1) * resolution - origin[a]) / d[a];
    } else if (d[a] < 0.0) {
      step[a] = -1;
      t_delta[a] = -resolution / d[a];
      t_next[a] = (cur[a] * resolution - origin[a]) / d[a];
    } else {
      t_delta[a] = std::numeric_limits<double>::infinity();
      t_next[a] = std::numeric_limits<double>::infinity();
    }
  }

  // The walk takes exactly the Manhattan distance in cells; the small slack
  // absorbs boundary rounding without ever allowing an unbounded loop.
  const long budget = (target - cur).cwiseAbs().sum() + 4;
  for (long i = 0; i < budget && (cur.array() != target.array()).any(); ++i) {
    int axis = 0;
    if (t_next[1] < t_next[axis]) axis = 1;
    if (t_next[2] < t_next[axis]) axis = 2;
    cur[axis] += step[axis];
    t_next[axis] += t_delta[axis];
    out.push_back(cur);
  }
  return out;
}

struct OccupancyParams {
  double p_hit = 0.7;
  double p_miss = 0.4;
  double clamp_min = 0.12;  // probabilities, applied in log-odds space
  double clamp_max = 0.97;
  double occupied_threshold = 0.5;

  void validate() const {
    if (!(p_hit > 0.5 && p_hit < 1.0)) throw InvalidParameter("p_hit must be in (0.5, 1)");
    if (!(p_miss > 0.0 && p_miss < 0.5)) throw InvalidParameter("p_miss must be in (0, 0.5)");
    if (!(clamp_min > 0.0 && clamp_min < clamp_max && clamp_max < 1.0))
      throw InvalidParameter("need 0 < clamp_min < clamp_max < 1");
    if (!(occupied_threshold > 0.0 && occupied_threshold < 1.0))
      throw InvalidParameter("occupied_threshold must be in (0, 1)");
  }
};

/// Occupied leaf voxels with height-normalized color values for export.
struct VoxelList {
  std::vector<Eigen::Vector3d> centers;
  std::vector<double> probabilities;
  std::vector<double> color_values;  // (z - z_min) / (z_max - z_min), 0.5 if flat
  double voxel_size = 0.0;
};

/// Sparse log-odds occupancy grid over integer voxel coordinates, stored as a
/// hash map keyed by packed per-axis indices (tree_depth bits each) with lazy
/// cell allocation. Raw log-odds sums are accumulated unclamped so scan order
/// cannot matter; the clamp is applied wherever a value is read out.
class OccupancyOctree {
 public:
  enum class State { occupied, free, unknown };
  struct QueryResult {
    State state = State::unknown;
    double probability = 0.5;
  };
  struct VoxelData {
    Eigen::Vector3d center;
    double log_odds = 0.0;  // clamped
    double probability = 0.5;
  };

  explicit OccupancyOctree(double resolution, OccupancyParams params = {}, int tree_depth = 16)
      : resolution_(resolution), params_(params), tree_depth_(tree_depth) {
    if (!(resolution > 0.0)) throw InvalidParameter("resolution must be > 0");
    if (tree_depth < 1 || tree_depth > 21)
      throw InvalidParameter("tree_depth must be in [1, 21] to fit packed keys");
    params_.validate();
    log_hit_ = std::log(params_.p_hit / (1.0 - params_.p_hit));
    log_miss_ = std::log(params_.p_miss / (1.0 - params_.p_miss));
    log_min_ = std::log(params_.clamp_min / (1.0 - params_.clamp_min));
    log_max_ = std::log(params_.clamp_max / (1.0 - params_.clamp_max));
  }

  double resolution() const { return resolution_; }
  const OccupancyParams& params() const { return params_; }
  int tree_depth() const { return tree_depth_; }
  std::size_t size() const { return cells_.size(); }

  /// Fold one scan into the map. Points farther than max_range from the
  /// sensor are ignored entirely. Each surviving point marks its endpoint
  /// voxel as a hit; with carve_free, every voxel strictly between the sensor
  /// origin and the endpoint is marked as a miss. Within one call a voxel is
  /// updated at most once, and a hit wins over any miss.
  void integrate(const PointCloud& cloud_world, const Eigen::Vector3d& sensor_origin,
                 double max_range, bool carve_free = false) {
    if (!(max_range > 0.0)) throw InvalidParameter("max_range must be > 0");
    std::unordered_map<std::uint64_t, bool> scan;  // key -> is_hit
    for (const auto& p : cloud_world.points) {
      if ((p - sensor_origin).norm() > max_range) continue;
      const auto end_key = key_of(p);
      if (end_key) scan[*end_key] = true;
      if (!carve_free) continue;
      const auto cells = traverse_ray(sensor_origin, p, resolution_);
      const auto origin_key = key_of(sensor_origin);
      for (const auto& c : cells) {
        const auto k = key_of_cell(c);
        if (!k || (origin_key && *k == *origin_key) || (end_key && *k == *end_key)) continue;
        scan.emplace(*k, false);  // never downgrades an existing hit
      }
    }
    for (const auto& [key, is_hit] : scan) cells_[key] += is_hit ? log_hit_ : log_miss_;
  }

  QueryResult query(const Eigen::Vector3d& p) const {
    const auto k = key_of(p);
    if (!k) return {};
    const auto it = cells_.find(*k);
    if (it == cells_.end()) return {};
    const double prob = logistic(clamped(it->second));
    return {prob >= params_.occupied_threshold ? State::occupied : State::free, prob};
  }

  /// Every updated voxel in deterministic (x, y, z index) order.
  std::vector<VoxelData> voxels() const {
    std::vector<std::pair<std::uint64_t, double>> sorted(cells_.begin(), cells_.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<VoxelData> out;
    out.reserve(sorted.size());
    for (const auto& [key, raw] : sorted) {
      const double l = clamped(raw);
      out.push_back({center_of(key), l, logistic(l)});
    }
    return out;
  }

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (const auto& [key, raw] : cells_)
      if (logistic(clamped(raw)) >= params_.occupied_threshold) ++n;
    return n;
  }

  /// Occupied voxels, sorted, with blue-to-red height values.
  VoxelList export_voxels() const {
    VoxelList list;
    list.voxel_size = resolution_;
    for (const auto& v : voxels()) {
      if (v.probability < params_.occupied_threshold) continue;
      list.centers.push_back(v.center);
      list.probabilities.push_back(v.probability);
    }
    double z_min = 0.0;
    double z_max = 0.0;
    if (!list.centers.empty()) {
      z_min = z_max = list.centers[0].z();
      for (const auto& c : list.centers) {
        z_min = std::min(z_min, c.z());
        z_max = std::max(z_max, c.z());
      }
    }
    for (const auto& c : list.centers)
      list.color_values.push_back(z_max > z_min ? (c.z() - z_min) / (z_max - z_min) : 0.5);
    return list;
  }

 private:
  static double logistic(double l) { return 1.0 / (1.0 + std::exp(-l)); }
  double clamped(double l) const { return std::clamp(l, log_min_, log_max_); }

  std::optional<std::uint64_t> key_of_cell(const Eigen::Vector3i& c) const {
    const std::int64_t bias = std::int64_t{1} << (tree_depth_ - 1);
    const std::int64_t limit = std::int64_t{1} << tree_depth_;
    std::uint64_t key = 0;
    for (int a = 0; a < 3; ++a) {
      const std::int64_t biased = c[a] + bias;
      if (biased < 0 || biased >= limit) return std::nullopt;  // outside the map extent
      key = (key << tree_depth_) | static_cast<std::uint64_t>(biased);
    }
    return key;
  }

  std::optional<std::uint64_t> key_of(const Eigen::Vector3d& p) const {
    return key_of_cell(Eigen::Vector3i(static_cast<int>(std::floor(p.x() / resolution_)),
                                       static_cast<int>(std::floor(p.y() / resolution_)),
                                       static_cast<int>(std::floor(p.z() / resolution_))));
  }

  Eigen::Vector3d center_of(std::uint64_t key) const {
    const std::int64_t bias = std::int64_t{1} << (tree_depth_ - 1);
    const std::uint64_t mask = (std::uint64_t{1} << tree_depth_) - 1;
    Eigen::Vector3d center;
    for (int a = 2; a >= 0; --a) {
      const std::int64_t idx = static_cast<std::int64_t>(key & mask) - bias;
      center[a] = (static_cast<double>(idx) + 0.5) * resolution_;
      key >>= tree_depth_;
    }
    return center;
  }

  double resolution_;
  OccupancyParams params_;
  int tree_depth_;
  double log_hit_;
  double log_miss_;
  double log_min_;
  double log_max_;
  std::unordered_map<std::uint64_t, double> cells_;
};

/// Transform each keyframe cloud into the world frame by its trajectory pose,
/// concatenate, and optionally voxel-downsample (voxel_size 0 skips it).
inline PointCloud fuse_clouds(const std::vector<FrameSet>& framesets, const Trajectory& trajectory,
                              double voxel_size) {
  if (framesets.size() != trajectory.size())
    throw LengthMismatch("frameset and trajectory lengths differ");
  if (voxel_size < 0.0) throw InvalidParameter("voxel size must be >= 0");
  PointCloud fused;
  for (std::size_t i = 0; i < framesets.size(); ++i) {
    const PointCloud pc = deproject(framesets[i].depth);
    const SE3& pose = trajectory.poses[i].transform;
    for (const auto& p : pc.points) fused.points.push_back(apply(pose, p));
  }
  if (voxel_size > 0.0 && !fused.empty()) fused = voxel_downsample(fused, voxel_size);
  return fused;
}

/// CSV dump of occupied voxels: center, edge length, probability.
inline void save_voxels_csv(const std::filesystem::path& path, const VoxelList& list) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "cx,cy,cz,size_m,prob\n";
  char line[160];
  for (std::size_t i = 0; i < list.centers.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%.9g", list.centers[i].x(),
                  list.centers[i].y(), list.centers[i].z(), list.voxel_size,
                  list.probabilities[i]);
    out << line << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fusemap
