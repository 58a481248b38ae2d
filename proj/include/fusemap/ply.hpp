#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <Eigen/Core>

#include "fusemap/errors.hpp"

namespace fusemap {

static_assert(std::endian::native == std::endian::little,
              "PLY writer emits host byte order and expects a little-endian host");

/// Linear blue-to-red map over [0, 1]: (0,0,255) at 0, (255,0,0) at 1.
inline std::array<std::uint8_t, 3> colormap_blue_red(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::llround(255.0 * v)), 0,
          static_cast<std::uint8_t>(std::llround(255.0 * (1.0 - v)))};
}

/// Binary little-endian PLY: per vertex x,y,z as 32-bit floats plus
/// red,green,blue bytes.
inline void write_ply(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& points,
                      const std::vector<std::array<std::uint8_t, 3>>& colors) {
  if (points.size() != colors.size())
    throw LengthMismatch("point and color counts differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "element vertex " << points.size() << "\n"
      << "property float x\n"
      << "property float y\n"
      << "property float z\n"
      << "property uchar red\n"
      << "property uchar green\n"
      << "property uchar blue\n"
      << "end_header\n";
  char record[15];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const float xyz[3] = {static_cast<float>(points[i].x()), static_cast<float>(points[i].y()),
                          static_cast<float>(points[i].z())};
    std::memcpy(record, xyz, 12);
    std::memcpy(record + 12, colors[i].data(), 3);
    out.write(record, sizeof(record));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

/// PLY colored by normalized height: z mapped blue (lowest) to red (highest);
/// a flat cloud gets the midpoint color.
inline void write_height_colored_ply(const std::filesystem::path& path,
                                     const std::vector<Eigen::Vector3d>& points) {
  double z_min = 0.0;
  double z_max = 0.0;
  if (!points.empty()) {
    z_min = z_max = points[0].z();
    for (const auto& p : points) {
      z_min = std::min(z_min, p.z());
      z_max = std::max(z_max, p.z());
    }
  }
  std::vector<std::array<std::uint8_t, 3>> colors;
  colors.reserve(points.size());
  for (const auto& p : points)
    colors.push_back(
        colormap_blue_red(z_max > z_min ? (p.z() - z_min) / (z_max - z_min) : 0.5));
  write_ply(path, points, colors);
}

}  // namespace fusemap
