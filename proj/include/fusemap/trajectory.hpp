#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fusemap/depth.hpp"
#include "fusemap/errors.hpp"
#include "fusemap/geometry.hpp"
#include "fusemap/registration.hpp"
#include "fusemap/sync.hpp"

namespace fusemap {

/// World-from-depth poses at strictly increasing timestamps.
struct Trajectory {
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
};

struct TrajectoryStats {
  double ate_rmse = 0.0;     // meters
  double max_error = 0.0;    // meters
  Eigen::Vector3d per_axis_rmse = Eigen::Vector3d::Zero();
  double path_length = 0.0;  // meters, of the second trajectory
};

enum class AlignMode { none, rigid };
enum class InitMode { identity, odometry_prior };

namespace detail {

inline void require_strictly_increasing(const std::vector<std::int64_t>& ts) {
  for (std::size_t i = 1; i < ts.size(); ++i)
    if (ts[i] <= ts[i - 1]) throw UnsortedStream("trajectory timestamps must strictly increase");
}

}  // namespace detail

/// Chain relative transforms onto an initial pose: pose_k = pose_{k-1} ∘ rel_k.
/// timestamps[0] stamps the initial pose, so it needs one more entry than
/// relatives.
inline Trajectory accumulate(const SE3& initial, const std::vector<SE3>& relatives,
                             const std::vector<std::int64_t>& timestamps) {
  if (timestamps.size() != relatives.size() + 1)
    throw LengthMismatch("timestamp count must be relative count + 1");
  detail::require_strictly_increasing(timestamps);

  Trajectory traj;
  traj.poses.reserve(timestamps.size());
  traj.poses.push_back({timestamps[0], initial});
  for (std::size_t i = 0; i < relatives.size(); ++i)
    traj.poses.push_back({timestamps[i + 1], compose(traj.poses.back().transform, relatives[i])});
  return traj;
}

/// World-from-depth poses straight from the tracking stream: each paired pose
/// composed with the fixed tracker-to-depth mount transform.
inline Trajectory odometry_trajectory(const std::vector<FrameSet>& framesets, const SE3& mount) {
  if (framesets.empty()) throw EmptyInput("no framesets");
  Trajectory traj;
  traj.poses.reserve(framesets.size());
  std::vector<std::int64_t> ts;
  for (const auto& fs : framesets) {
    ts.push_back(fs.depth.timestamp_us);
    traj.poses.push_back({fs.depth.timestamp_us, compose(fs.pose.transform, mount)});
  }
  detail::require_strictly_increasing(ts);
  return traj;
}

struct IcpTrajectoryResult {
  Trajectory trajectory;                  // partial up to a failed pair, if any
  std::vector<IcpResult> pair_results;    // one per registered consecutive pair
  std::optional<std::size_t> failed_pair; // index i = pair (frame i, frame i+1)
  std::string failure_reason;
};

/// Register consecutive keyframe clouds and chain the results into a
/// trajectory anchored at the first odometry pose. Each frame's depth image is
/// decimated, deprojected, optionally voxel-downsampled, and (for
/// point-to-plane) given normals; the earlier frame of each pair is the
/// registration target, so each result is the earlier-from-later relative
/// transform and the chain accumulates by right-multiplication.
inline IcpTrajectoryResult icp_trajectory(const std::vector<FrameSet>& framesets, const SE3& mount,
                                          const IcpConfig& cfg, InitMode init_mode,
                                          int decimation_factor = 1, double voxel_size = 0.0,
                                          std::size_t normal_knn = kDefaultNormalNeighbors) {
  cfg.validate();
  if (framesets.size() < 2) throw InvalidParameter("need at least 2 framesets");
  if (voxel_size < 0.0) throw InvalidParameter("voxel size must be >= 0");
  if (decimation_factor != 1 && decimation_factor != 2 && decimation_factor != 4 &&
      decimation_factor != 8)
    throw InvalidFactor("decimation factor must be one of {1, 2, 4, 8}");

  const Trajectory odom = odometry_trajectory(framesets, mount);

  std::vector<std::optional<PointCloud>> clouds(framesets.size());
  const auto cloud_of = [&](std::size_t i) -> const PointCloud& {
    if (!clouds[i]) {
      PointCloud pc = deproject(decimate(framesets[i].depth, decimation_factor));
      if (voxel_size > 0.0) pc = voxel_downsample(pc, voxel_size);
      if (cfg.method == IcpMethod::point_to_plane)
        pc = estimate_normals(pc, normal_knn, Eigen::Vector3d::Zero());
      clouds[i] = std::move(pc);
    }
    return *clouds[i];
  };

  IcpTrajectoryResult out;
  std::vector<SE3> relatives;
  std::vector<std::int64_t> ts = {framesets[0].depth.timestamp_us};
  for (std::size_t i = 0; i + 1 < framesets.size(); ++i) {
    try {
      IcpConfig pair_cfg = cfg;
      if (init_mode == InitMode::odometry_prior)
        pair_cfg.init = relative(odom.poses[i].transform, odom.poses[i + 1].transform);
      else
        pair_cfg.init = SE3();
      out.pair_results.push_back(register_clouds(cloud_of(i + 1), cloud_of(i), pair_cfg));
    } catch (const Error& e) {
      out.failed_pair = i;
      out.failure_reason = e.what();
      break;
    }
    relatives.push_back(out.pair_results.back().transform);
    ts.push_back(framesets[i + 1].depth.timestamp_us);
  }
  out.trajectory = accumulate(odom.poses[0].transform, relatives, ts);
  return out;
}

/// Translation-error statistics of b against reference a. With rigid
/// alignment, the closed-form least-squares SE3 mapping b's positions onto a's
/// is removed first (trajectories from pure registration share no global frame
/// with odometry). path_length always measures b as given.
inline TrajectoryStats compare(const Trajectory& a, const Trajectory& b, AlignMode align) {
  if (a.size() != b.size()) throw LengthMismatch("trajectories differ in length");
  TrajectoryStats stats;
  if (a.empty()) return stats;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.poses[i].timestamp_us - b.poses[i].timestamp_us) > 1000)
      throw TimestampMismatch("trajectory timestamps differ by more than 1 ms at row " +
                              std::to_string(i));
  }

  std::vector<Eigen::Vector3d> pa;
  std::vector<Eigen::Vector3d> pb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa.push_back(a.poses[i].transform.translation());
    pb.push_back(b.poses[i].transform.translation());
  }
  if (align == AlignMode::rigid) {
    const SE3 g = detail::fit_rigid(pb, pa);
    for (auto& p : pb) p = apply(g, p);
  }

  Eigen::Vector3d sq_sum = Eigen::Vector3d::Zero();
  double max_err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::Vector3d d = pa[i] - pb[i];
    sq_sum += d.cwiseProduct(d);
    max_err = std::max(max_err, d.norm());
  }
  const double n = static_cast<double>(a.size());
  stats.per_axis_rmse = (sq_sum / n).cwiseSqrt();
  stats.ate_rmse = std::sqrt(sq_sum.sum() / n);
  stats.max_error = max_err;
  for (std::size_t i = 1; i < b.size(); ++i)
    stats.path_length +=
        (b.poses[i].transform.translation() - b.poses[i - 1].transform.translation()).norm();
  return stats;
}

inline constexpr const char* kTrajectoryCsvHeader = "timestamp_us,tx,ty,tz,qx,qy,qz,qw";

/// One row per pose: scalar-last unit quaternion, 9 significant digits.
inline void save_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kTrajectoryCsvHeader << "\n";
  char line[256];
  for (const auto& pose : traj.poses) {
    const Eigen::Vector4d q = to_quaternion(pose.transform);
    const Eigen::Vector3d& t = pose.transform.translation();
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<long long>(pose.timestamp_us), t.x(), t.y(), t.z(), q[0], q[1], q[2],
                  q[3]);
    out << line << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline Trajectory load_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryCsvHeader)
    throw CorruptHeader(path.string() + ": expected header '" + kTrajectoryCsvHeader + "'");

  Trajectory traj;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    long long ts = 0;
    double t[3];
    double q[4];
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &ts, &t[0], &t[1], &t[2],
                    &q[0], &q[1], &q[2], &q[3]) != 8)
      throw CorruptHeader(path.string() + ": malformed row " + std::to_string(row));
    traj.poses.push_back(
        {ts, from_quaternion_translation(Eigen::Vector4d(q[0], q[1], q[2], q[3]),
                                         Eigen::Vector3d(t[0], t[1], t[2]))});
  }
  return traj;
}

}  // namespace fusemap
