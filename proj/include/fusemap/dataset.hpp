#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "fusemap/depth.hpp"
#include "fusemap/errors.hpp"
#include "fusemap/geometry.hpp"
#include "fusemap/trajectory.hpp"

namespace fusemap {

/// On-disk dataset layout:
///
///   <dir>/manifest.json         intrinsics, mount extrinsics, stream rates
///   <dir>/poses.csv             pose stream (timestamp_us,tx,ty,tz,qx,qy,qz,qw)
///   <dir>/groundtruth.csv       synthetic only: exact depth-camera poses, same schema
///   <dir>/depth/<timestamp_us>.pgm
///
/// Depth frames are binary 16-bit PGM (P5, maxval 65535, big-endian sample
/// order per the PGM convention) so they stay inspectable with stock image
/// tools and need no dependencies to parse.

/// Rendered depth is cut off at this range; farther pixels read 0 (invalid),
/// matching the behavior of commodity stereo depth sensors.
inline constexpr double kMaxDepthRange = 10.0;

struct DatasetManifest {
  CameraIntrinsics intrinsics = CameraIntrinsics::synthetic_default();
  SE3 mount;                     // pose-sensor-from-depth-camera extrinsics
  double pose_rate_hz = 200.0;
  double depth_rate_hz = 30.0;
  std::size_t frame_count = 0;

  void validate() const {
    intrinsics.validate();
    if (pose_rate_hz <= 0.0 || depth_rate_hz <= 0.0)
      throw InvalidParameter("manifest: stream rates must be positive");
    if (pose_rate_hz < depth_rate_hz)
      throw InvalidParameter("manifest: pose rate must be at least the depth rate");
  }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Pose> poses;          // tracking-sensor stream, sorted by timestamp
  std::vector<DepthImage> depths;   // depth stream, sorted by timestamp
  std::optional<Trajectory> groundtruth;  // exact depth-camera poses at depth timestamps
};

// ---------------------------------------------------------------------------
// Synthetic scenes

struct AlignedBox {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

/// Trajectory control point: the camera moves between consecutive waypoints
/// with constant velocity and constant yaw rate.
struct Waypoint {
  double time_s = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw_rad = 0.0;
};

/// A rectangular room (viewed from inside) with axis-aligned box obstacles and
/// a waypoint trajectory for the depth camera. World frame is z-up.
struct SceneSpec {
  AlignedBox room;
  std::vector<AlignedBox> obstacles;
  std::vector<Waypoint> waypoints;
  double depth_noise_sigma = 0.0;      // meters, Gaussian per rendered pixel
  double pose_noise_sigma_m = 0.0;     // meters, Gaussian per reported position axis
  double pose_noise_sigma_rad = 0.0;   // radians, Gaussian axis-angle on reported rotations

  void validate() const;
};

/// Camera orientation at yaw 0: optical axis along world +x, image right along
/// world -y, image down along world -z (so the image is upright in a z-up
/// world). Yaw rotates this about world z.
inline Eigen::Matrix3d camera_base_rotation() {
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d(0.0, -1.0, 0.0);
  r.col(1) = Eigen::Vector3d(0.0, 0.0, -1.0);
  r.col(2) = Eigen::Vector3d(1.0, 0.0, 0.0);
  return r;
}

/// Depth-camera pose at time t: piecewise-linear position and yaw through the
/// waypoints, clamped to the first/last waypoint outside their time span.
inline SE3 scene_pose_at(const SceneSpec& spec, double t) {
  const auto& wp = spec.waypoints;
  Eigen::Vector3d position;
  double yaw;
  if (t <= wp.front().time_s) {
    position = wp.front().position;
    yaw = wp.front().yaw_rad;
  } else if (t >= wp.back().time_s) {
    position = wp.back().position;
    yaw = wp.back().yaw_rad;
  } else {
    std::size_t seg = 0;
    while (wp[seg + 1].time_s < t) ++seg;
    const double u = (t - wp[seg].time_s) / (wp[seg + 1].time_s - wp[seg].time_s);
    position = (1.0 - u) * wp[seg].position + u * wp[seg + 1].position;
    yaw = (1.0 - u) * wp[seg].yaw_rad + u * wp[seg + 1].yaw_rad;
  }
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return SE3(rz * camera_base_rotation(), position);
}

namespace detail {

/// Signed distance from a point to the surface of a box: negative inside,
/// positive outside; |sdf| is the distance to the nearest face either way.
inline double box_surface_distance(const AlignedBox& box, const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = (box.min - p).cwiseMax(p - box.max);
  const double outside = d.cwiseMax(0.0).norm();
  const double inside = std::min(d.maxCoeff(), 0.0);
  return outside + inside;
}

inline bool point_in_free_space(const SceneSpec& spec, const Eigen::Vector3d& p) {
  if ((p.array() <= spec.room.min.array()).any() || (p.array() >= spec.room.max.array()).any())
    return false;
  for (const auto& box : spec.obstacles)
    if ((p.array() > box.min.array()).all() && (p.array() < box.max.array()).all()) return false;
  return true;
}

/// Parameter at which a ray starting inside `box` crosses its boundary.
inline double ray_box_exit(const AlignedBox& box, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& dir) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] > 0.0)
      t_exit = std::min(t_exit, (box.max[axis] - origin[axis]) / dir[axis]);
    else if (dir[axis] < 0.0)
      t_exit = std::min(t_exit, (box.min[axis] - origin[axis]) / dir[axis]);
  }
  return t_exit;
}

/// Parameter at which a ray starting outside `box` first enters it, or nullopt
/// if the ray misses the box ahead of the origin.
inline std::optional<double> ray_box_entry(const AlignedBox& box, const Eigen::Vector3d& origin,
                                           const Eigen::Vector3d& dir) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) {
      if (origin[axis] < box.min[axis] || origin[axis] > box.max[axis]) return std::nullopt;
      continue;
    }
    double ta = (box.min[axis] - origin[axis]) / dir[axis];
    double tb = (box.max[axis] - origin[axis]) / dir[axis];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

/// Per-stream, per-index seed derivation so every frame draws from its own
/// generator regardless of rendering order (splitmix64 finalizer).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream * 0x100000001b3ull + index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

inline void SceneSpec::validate() const {
  if ((room.min.array() >= room.max.array()).any())
    throw InvalidScene("room box is empty or inverted");
  for (const auto& box : obstacles) {
    if ((box.min.array() >= box.max.array()).any())
      throw InvalidScene("obstacle box is empty or inverted");
    if ((box.min.array() < room.min.array()).any() || (box.max.array() > room.max.array()).any())
      throw InvalidScene("obstacle extends outside the room");
  }
  if (waypoints.empty()) throw InvalidScene("trajectory needs at least one waypoint");
  for (std::size_t i = 1; i < waypoints.size(); ++i)
    if (waypoints[i].time_s <= waypoints[i - 1].time_s)
      throw InvalidScene("waypoint times must be strictly increasing");
  if (depth_noise_sigma < 0.0 || pose_noise_sigma_m < 0.0 || pose_noise_sigma_rad < 0.0)
    throw InvalidScene("noise sigmas must be non-negative");
  // The camera must stay in free space along every segment, not just at the
  // control points.
  for (std::size_t i = 0; i + 1 < waypoints.size() || i == 0; ++i) {
    const Eigen::Vector3d a = waypoints[i].position;
    const Eigen::Vector3d b = waypoints[std::min(i + 1, waypoints.size() - 1)].position;
    for (int s = 0; s <= 64; ++s) {
      const Eigen::Vector3d p = a + (s / 64.0) * (b - a);
      if (!detail::point_in_free_space(*this, p))
        throw InvalidScene("trajectory leaves free space between waypoints");
    }
  }
}

/// Distance from the camera at `origin` to the first surface along `dir`
/// (room wall or obstacle face), in units of |dir|.
inline double scene_ray_range(const SceneSpec& spec, const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& dir) {
  double t = detail::ray_box_exit(spec.room, origin, dir);
  for (const auto& box : spec.obstacles) {
    const auto entry = detail::ray_box_entry(box, origin, dir);
    if (entry && *entry > 0.0) t = std::min(t, *entry);
  }
  return t;
}

/// Renders a pinhole depth image of the scene from the given depth-camera
/// pose. The ray through pixel (u, v) has camera-frame direction
/// ((u-cx)/fx, (v-cy)/fy, 1), so the surface parameter is the camera-z depth
/// directly; raw = round(depth / depth_scale), 0 beyond the sensor range.
inline DepthImage render_scene(const SceneSpec& spec, const CameraIntrinsics& intrinsics,
                               const SE3& world_from_cam, std::int64_t timestamp_us,
                               std::mt19937_64* noise_rng = nullptr) {
  DepthImage img;
  img.intrinsics = intrinsics;
  img.timestamp_us = timestamp_us;
  img.values.assign(static_cast<std::size_t>(intrinsics.width) * intrinsics.height, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Matrix3d& rot = world_from_cam.rotation();
  const Eigen::Vector3d& origin = world_from_cam.translation();
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      const Eigen::Vector3d dir_cam((u - intrinsics.cx) / intrinsics.fx,
                                    (v - intrinsics.cy) / intrinsics.fy, 1.0);
      double depth = scene_ray_range(spec, origin, rot * dir_cam);
      if (noise_rng != nullptr && spec.depth_noise_sigma > 0.0)
        depth += spec.depth_noise_sigma * gauss(*noise_rng);
      if (!(depth > 0.0) || depth > kMaxDepthRange) continue;
      const long long raw = std::llround(depth / intrinsics.depth_scale);
      if (raw <= 0 || raw > 65535) continue;
      img.values[static_cast<std::size_t>(v) * intrinsics.width + u] =
          static_cast<std::uint16_t>(raw);
    }
  }
  return img;
}

/// Builds the full synthetic dataset in memory: depth frames rendered along
/// the scene trajectory, the (optionally noisy) tracking-pose stream, and the
/// exact depth-camera ground truth at depth timestamps. The tracking stream
/// reports W_T_T = W_T_D * mount^-1 so that composing a pose with the mount
/// recovers the rendering camera.
inline Dataset synthesize_dataset(const SceneSpec& spec, const DatasetManifest& manifest,
                                  std::uint64_t seed) {
  spec.validate();
  manifest.validate();

  Dataset ds;
  ds.manifest = manifest;
  ds.groundtruth = Trajectory{};
  const SE3 mount_inv = inverse(manifest.mount);

  for (std::size_t j = 0; j < manifest.frame_count; ++j) {
    const double t = static_cast<double>(j) / manifest.depth_rate_hz;
    const std::int64_t ts = std::llround(static_cast<double>(j) * 1e6 / manifest.depth_rate_hz);
    const SE3 cam = scene_pose_at(spec, t);
    std::mt19937_64 rng(detail::substream_seed(seed, 1, j));
    ds.depths.push_back(render_scene(spec, manifest.intrinsics, cam, ts,
                                     spec.depth_noise_sigma > 0.0 ? &rng : nullptr));
    ds.groundtruth->poses.push_back({ts, cam});
  }

  // The pose stream must cover the last depth frame so every frame has a
  // nearby pose on both sides.
  std::size_t pose_count = 0;
  if (manifest.frame_count > 0) {
    const double span_s =
        static_cast<double>(manifest.frame_count - 1) / manifest.depth_rate_hz;
    pose_count = static_cast<std::size_t>(std::ceil(span_s * manifest.pose_rate_hz - 1e-9)) + 1;
  }
  for (std::size_t k = 0; k < pose_count; ++k) {
    const double t = static_cast<double>(k) / manifest.pose_rate_hz;
    const std::int64_t ts = std::llround(static_cast<double>(k) * 1e6 / manifest.pose_rate_hz);
    SE3 body = compose(scene_pose_at(spec, t), mount_inv);
    if (spec.pose_noise_sigma_m > 0.0 || spec.pose_noise_sigma_rad > 0.0) {
      std::mt19937_64 rng(detail::substream_seed(seed, 2, k));
      std::normal_distribution<double> gauss(0.0, 1.0);
      Eigen::Vector3d axis_angle(gauss(rng), gauss(rng), gauss(rng));
      axis_angle *= spec.pose_noise_sigma_rad;
      const Eigen::Vector3d jitter(gauss(rng), gauss(rng), gauss(rng));
      Eigen::Matrix3d rot = body.rotation();
      if (axis_angle.norm() > 0.0)
        rot = rot * Eigen::AngleAxisd(axis_angle.norm(), axis_angle.normalized()).toRotationMatrix();
      body = SE3(rot, body.translation() + spec.pose_noise_sigma_m * jitter);
    }
    ds.poses.push_back({ts, body});
  }
  return ds;
}

// ---------------------------------------------------------------------------
// PGM depth frames

namespace detail {

inline void write_pgm16(const std::filesystem::path& path, const DepthImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width() << " " << img.height() << "\n65535\n";
  std::vector<unsigned char> bytes(img.values.size() * 2);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(img.values[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(img.values[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write on " + path.string());
}

/// Reads one header number, skipping whitespace and '#' comment lines. The
/// byte terminating the number is consumed, which after maxval is exactly the
/// single separator preceding the binary samples.
inline long pgm_header_number(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c != EOF && (std::isspace(c) != 0 || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  if (c == EOF || std::isdigit(c) == 0)
    throw CorruptHeader("malformed PGM header in " + path.string());
  long value = 0;
  while (c != EOF && std::isdigit(c) != 0) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

inline DepthImage read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path.string());
  if (in.get() != 'P' || in.get() != '5')
    throw CorruptHeader(path.string() + " is not a binary PGM (P5)");
  const long width = pgm_header_number(in, path);
  const long height = pgm_header_number(in, path);
  const long maxval = pgm_header_number(in, path);
  if (width <= 0 || height <= 0)
    throw CorruptHeader("bad image size in " + path.string());
  if (maxval != 65535)
    throw CorruptHeader(path.string() + " has maxval " + std::to_string(maxval) +
                        ", expected 65535");
  DepthImage img;
  img.intrinsics.width = static_cast<int>(width);
  img.intrinsics.height = static_cast<int>(height);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw CorruptHeader("truncated pixel data in " + path.string());
  img.values.resize(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    img.values[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  return img;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  const Eigen::Matrix4d mount = m.mount.matrix();
  std::array<double, 16> mount_row_major;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) mount_row_major[static_cast<std::size_t>(4 * r + c)] = mount(r, c);
  return nlohmann::json{
      {"intrinsics",
       {{"width", m.intrinsics.width},
        {"height", m.intrinsics.height},
        {"fx", m.intrinsics.fx},
        {"fy", m.intrinsics.fy},
        {"cx", m.intrinsics.cx},
        {"cy", m.intrinsics.cy},
        {"depth_scale", m.intrinsics.depth_scale}}},
      {"mount", mount_row_major},
      {"pose_rate_hz", m.pose_rate_hz},
      {"depth_rate_hz", m.depth_rate_hz},
      {"frame_count", m.frame_count}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  const auto& intr = j.at("intrinsics");
  m.intrinsics.width = intr.at("width").get<int>();
  m.intrinsics.height = intr.at("height").get<int>();
  m.intrinsics.fx = intr.at("fx").get<double>();
  m.intrinsics.fy = intr.at("fy").get<double>();
  m.intrinsics.cx = intr.at("cx").get<double>();
  m.intrinsics.cy = intr.at("cy").get<double>();
  m.intrinsics.depth_scale = intr.at("depth_scale").get<double>();
  const auto mount_row_major = j.at("mount").get<std::array<double, 16>>();
  Eigen::Matrix4d mount;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) mount(r, c) = mount_row_major[static_cast<std::size_t>(4 * r + c)];
  m.mount = SE3::from_matrix(mount);
  m.pose_rate_hz = j.at("pose_rate_hz").get<double>();
  m.depth_rate_hz = j.at("depth_rate_hz").get<double>();
  m.frame_count = j.at("frame_count").get<std::size_t>();
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Load / save

/// Writes the dataset atomically: everything goes to a sibling temp directory
/// which is renamed into place only once complete. Refuses to replace an
/// existing dataset unless `overwrite` is set.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                         bool overwrite = false) {
  ds.manifest.validate();
  if (ds.depths.size() != ds.manifest.frame_count)
    throw LengthMismatch("manifest frame_count " + std::to_string(ds.manifest.frame_count) +
                         " does not match " + std::to_string(ds.depths.size()) + " depth frames");
  if (std::filesystem::exists(dir) && !overwrite)
    throw IoError("refusing to overwrite existing dataset at " + dir.string() +
                  " without overwrite flag");

  const std::filesystem::path parent =
      dir.has_parent_path() ? dir.parent_path() : std::filesystem::path(".");
  const std::filesystem::path tmp =
      parent / (dir.filename().string() + ".tmp-" + std::to_string(::getpid()));
  try {
    std::filesystem::remove_all(tmp);
    std::filesystem::create_directories(tmp / "depth");

    std::ofstream manifest_out(tmp / "manifest.json");
    if (!manifest_out) throw IoError("cannot write manifest.json");
    manifest_out << detail::manifest_to_json(ds.manifest).dump(2) << "\n";

    save_trajectory_csv(tmp / "poses.csv", Trajectory{ds.poses});
    if (ds.groundtruth) save_trajectory_csv(tmp / "groundtruth.csv", *ds.groundtruth);
    for (const auto& img : ds.depths)
      detail::write_pgm16(tmp / "depth" / (std::to_string(img.timestamp_us) + ".pgm"), img);

    if (overwrite) std::filesystem::remove_all(dir);
    std::filesystem::rename(tmp, dir);
  } catch (const std::filesystem::filesystem_error& e) {
    std::filesystem::remove_all(tmp);
    throw IoError(std::string("dataset save failed: ") + e.what());
  } catch (...) {
    std::filesystem::remove_all(tmp);
    throw;
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;

  const auto manifest_path = dir / "manifest.json";
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw MissingFile("cannot open " + manifest_path.string());
  try {
    ds.manifest = detail::manifest_from_json(nlohmann::json::parse(manifest_in));
    ds.manifest.validate();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(manifest_path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw CorruptHeader(manifest_path.string() + ": " + e.what());
  }

  ds.poses = load_trajectory_csv(dir / "poses.csv").poses;
  std::stable_sort(ds.poses.begin(), ds.poses.end(),
                   [](const Pose& a, const Pose& b) { return a.timestamp_us < b.timestamp_us; });
  if (std::filesystem::exists(dir / "groundtruth.csv"))
    ds.groundtruth = load_trajectory_csv(dir / "groundtruth.csv");

  const auto depth_dir = dir / "depth";
  if (!std::filesystem::is_directory(depth_dir)) {
    if (ds.manifest.frame_count > 0) throw MissingFile("missing depth directory " + depth_dir.string());
    return ds;
  }
  std::vector<std::pair<std::int64_t, std::filesystem::path>> frames;
  for (const auto& entry : std::filesystem::directory_iterator(depth_dir)) {
    if (entry.path().extension() != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    std::int64_t ts = 0;
    const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), ts);
    if (ec != std::errc() || ptr != stem.data() + stem.size())
      throw CorruptHeader("depth filename " + entry.path().filename().string() +
                          " is not a <timestamp_us>.pgm");
    frames.emplace_back(ts, entry.path());
  }
  std::sort(frames.begin(), frames.end());
  if (frames.size() != ds.manifest.frame_count)
    throw CorruptHeader("manifest frame_count " + std::to_string(ds.manifest.frame_count) +
                        " does not match " + std::to_string(frames.size()) + " depth files");

  for (const auto& [ts, path] : frames) {
    DepthImage img = detail::read_pgm16(path);
    if (img.width() != ds.manifest.intrinsics.width ||
        img.height() != ds.manifest.intrinsics.height)
      throw InconsistentDims(path.filename().string() + " is " + std::to_string(img.width()) +
                             "x" + std::to_string(img.height()) + ", manifest says " +
                             std::to_string(ds.manifest.intrinsics.width) + "x" +
                             std::to_string(ds.manifest.intrinsics.height));
    img.intrinsics = ds.manifest.intrinsics;
    img.timestamp_us = ts;
    ds.depths.push_back(std::move(img));
  }
  return ds;
}

/// Renders the scene, writes the dataset (plus groundtruth.csv) to `dir`, and
/// returns the in-memory copy. Deterministic for a given seed.
inline Dataset generate_synthetic(const SceneSpec& spec, const DatasetManifest& manifest,
                                  std::uint64_t seed, const std::filesystem::path& dir,
                                  bool overwrite = false) {
  Dataset ds = synthesize_dataset(spec, manifest, seed);
  save_dataset(ds, dir, overwrite);
  return ds;
}

// ---------------------------------------------------------------------------
// Scene files

/// A scene file bundles the geometry with the recording parameters so one JSON
/// file fully describes a synthetic dataset (modulo the seed).
struct SceneFile {
  SceneSpec scene;
  DatasetManifest manifest;
};

inline SceneFile parse_scene_json(const nlohmann::json& j) {
  SceneFile f;
  const auto vec3 = [](const nlohmann::json& a) {
    const auto v = a.get<std::array<double, 3>>();
    return Eigen::Vector3d(v[0], v[1], v[2]);
  };
  const auto box = [&](const nlohmann::json& b) {
    return AlignedBox{vec3(b.at("min")), vec3(b.at("max"))};
  };
  f.scene.room = box(j.at("room"));
  for (const auto& b : j.value("obstacles", nlohmann::json::array())) f.scene.obstacles.push_back(box(b));
  for (const auto& w : j.at("waypoints")) {
    Waypoint wp;
    wp.time_s = w.at("time_s").get<double>();
    wp.position = vec3(w.at("position"));
    wp.yaw_rad = w.value("yaw_deg", 0.0) * M_PI / 180.0;
    f.scene.waypoints.push_back(wp);
  }
  f.scene.depth_noise_sigma = j.value("depth_noise_sigma", 0.0);
  f.scene.pose_noise_sigma_m = j.value("pose_noise_sigma_m", 0.0);
  f.scene.pose_noise_sigma_rad = j.value("pose_noise_sigma_rad", 0.0);

  if (j.contains("intrinsics")) {
    const auto& intr = j.at("intrinsics");
    f.manifest.intrinsics.width = intr.at("width").get<int>();
    f.manifest.intrinsics.height = intr.at("height").get<int>();
    f.manifest.intrinsics.fx = intr.at("fx").get<double>();
    f.manifest.intrinsics.fy = intr.at("fy").get<double>();
    f.manifest.intrinsics.cx = intr.at("cx").get<double>();
    f.manifest.intrinsics.cy = intr.at("cy").get<double>();
    f.manifest.intrinsics.depth_scale = intr.value("depth_scale", 0.001);
  }
  if (j.contains("mount")) {
    const auto mount_row_major = j.at("mount").get<std::array<double, 16>>();
    Eigen::Matrix4d mount;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        mount(r, c) = mount_row_major[static_cast<std::size_t>(4 * r + c)];
    f.manifest.mount = SE3::from_matrix(mount);
  }
  f.manifest.pose_rate_hz = j.value("pose_rate_hz", 200.0);
  f.manifest.depth_rate_hz = j.value("depth_rate_hz", 30.0);
  f.manifest.frame_count = j.value("frame_count", std::size_t{30});
  return f;
}

inline SceneFile load_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path.string());
  try {
    return parse_scene_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(path.string() + ": " + e.what());
  }
}

}  // namespace fusemap
