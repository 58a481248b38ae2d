#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

namespace fusemap {

/// Points in meters, with optional per-point unit normals. Normals whose
/// neighborhood was rank-deficient during estimation are stored as (0,0,0)
/// and flagged in `degenerate`.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;       // empty, or one per point
  std::vector<std::uint8_t> degenerate;       // empty, or one per point (1 = no valid normal)

  bool has_normals() const { return !normals.empty(); }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  bool normal_valid(std::size_t i) const {
    return has_normals() && (degenerate.empty() || degenerate[i] == 0);
  }
};

}  // namespace fusemap
