#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fusemap/bench.hpp"
#include "fusemap/dataset.hpp"
#include "fusemap/occupancy.hpp"
#include "fusemap/ply.hpp"
#include "fusemap/registration.hpp"
#include "fusemap/sync.hpp"
#include "fusemap/trajectory.hpp"

namespace {

std::string nine(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

fusemap::IcpMethod parse_method(const std::string& s) {
  return fusemap::detail::parse_method_label(s);
}

fusemap::InitMode parse_init(const std::string& s) { return fusemap::detail::parse_init_label(s); }

/// Shared cloud preparation: decimate, deproject, optionally thin by voxel,
/// and add normals when the solver needs them.
fusemap::PointCloud prepare_cloud(const fusemap::DepthImage& depth, int decimation_factor,
                                  double voxel_size, fusemap::IcpMethod method) {
  fusemap::PointCloud pc = fusemap::deproject(fusemap::decimate(depth, decimation_factor));
  if (voxel_size > 0.0) pc = fusemap::voxel_downsample(pc, voxel_size);
  if (method == fusemap::IcpMethod::point_to_plane)
    pc = fusemap::estimate_normals(pc, fusemap::kDefaultNormalNeighbors, Eigen::Vector3d::Zero());
  return pc;
}

int run_synth(const std::string& scene_path, const std::string& out_dir, std::uint64_t seed,
              bool overwrite) {
  const auto file = fusemap::load_scene_file(scene_path);
  const auto ds = fusemap::generate_synthetic(file.scene, file.manifest, seed, out_dir, overwrite);
  std::cout << "wrote " << ds.depths.size() << " depth frames, " << ds.poses.size()
            << " poses to " << out_dir << "\n";
  return 0;
}

int run_sync(const std::string& dataset, std::int64_t max_offset_us, bool stats) {
  const auto ds = fusemap::load_dataset(dataset);
  const auto pairing = fusemap::pair_streams(ds.poses, ds.depths, max_offset_us);
  if (stats) {
    std::cout << "paired " << pairing.stats.paired << "\n"
              << "dropped " << pairing.stats.dropped << "\n"
              << "max_abs_offset_us " << pairing.stats.max_abs_offset_us << "\n"
              << "mean_abs_offset_us " << nine(pairing.stats.mean_abs_offset_us) << "\n";
  } else {
    std::cout << "depth_ts_us,pose_ts_us,offset_us\n";
    for (const auto& fs : pairing.framesets)
      std::cout << fs.depth.timestamp_us << "," << fs.pose.timestamp_us << ","
                << fs.time_offset_us << "\n";
  }
  return 0;
}

int run_align(const std::string& dataset, std::size_t frame_a, std::size_t frame_b,
              const std::string& method_s, const std::string& init_s, double max_dist,
              int decimate, double voxel, const std::string& out_csv) {
  const auto method = parse_method(method_s);
  const auto ds = fusemap::load_dataset(dataset);
  const auto framesets = fusemap::pair_streams(ds.poses, ds.depths).framesets;
  if (frame_a >= framesets.size() || frame_b >= framesets.size())
    throw fusemap::InvalidParameter("frame index out of range (have " +
                                    std::to_string(framesets.size()) + " framesets)");
  if (frame_a == frame_b) throw fusemap::InvalidParameter("--frame-a and --frame-b must differ");

  fusemap::IcpConfig cfg;
  cfg.method = method;
  cfg.max_correspondence_distance = max_dist;
  if (parse_init(init_s) == fusemap::InitMode::odometry_prior) {
    const auto odom_a = fusemap::compose(framesets[frame_a].pose.transform, ds.manifest.mount);
    const auto odom_b = fusemap::compose(framesets[frame_b].pose.transform, ds.manifest.mount);
    cfg.init = fusemap::relative(odom_a, odom_b);
  }

  const auto target = prepare_cloud(framesets[frame_a].depth, decimate, voxel, method);
  const auto source = prepare_cloud(framesets[frame_b].depth, decimate, voxel, method);
  const auto result = fusemap::register_clouds(source, target, cfg);

  const Eigen::Vector4d q = fusemap::to_quaternion(result.transform);  // (qx, qy, qz, qw)
  const Eigen::Vector3d& t = result.transform.translation();
  std::cout << "fitness " << nine(result.fitness) << "\n"
            << "inlier_rmse " << nine(result.inlier_rmse) << "\n"
            << "iterations " << result.iterations << "\n"
            << "converged " << (result.converged ? "yes" : "no") << "\n"
            << "elapsed_s " << nine(result.elapsed_s) << "\n"
            << "transform " << nine(t.x()) << " " << nine(t.y()) << " " << nine(t.z()) << " "
            << nine(q[0]) << " " << nine(q[1]) << " " << nine(q[2]) << " " << nine(q[3]) << "\n";

  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw fusemap::IoError("cannot write " + out_csv);
    out << "frame_a,frame_b,fitness,inlier_rmse,iterations,converged,tx,ty,tz,qx,qy,qz,qw\n"
        << frame_a << "," << frame_b << "," << nine(result.fitness) << ","
        << nine(result.inlier_rmse) << "," << result.iterations << ","
        << (result.converged ? 1 : 0) << "," << nine(t.x()) << "," << nine(t.y()) << ","
        << nine(t.z()) << "," << nine(q[0]) << "," << nine(q[1]) << "," << nine(q[2]) << ","
        << nine(q[3]) << "\n";
    if (!out) throw fusemap::IoError("short write on " + out_csv);
  }
  return 0;
}

int run_trajectory(const std::string& dataset, const std::string& source,
                   const std::string& init_s, double interval, const std::string& method_s,
                   double max_dist, int decimate, double voxel, const std::string& out_csv) {
  const auto ds = fusemap::load_dataset(dataset);
  const auto framesets = fusemap::pair_streams(ds.poses, ds.depths).framesets;
  const auto keyframes = fusemap::select_keyframes(framesets, interval);

  fusemap::Trajectory traj;
  if (source == "odometry") {
    traj = fusemap::odometry_trajectory(keyframes, ds.manifest.mount);
  } else if (source == "icp") {
    fusemap::IcpConfig cfg;
    cfg.method = parse_method(method_s);
    cfg.max_correspondence_distance = max_dist;
    const auto result = fusemap::icp_trajectory(keyframes, ds.manifest.mount, cfg,
                                                parse_init(init_s), decimate, voxel);
    if (result.failed_pair)
      throw fusemap::PipelineError("registration failed at keyframe pair " +
                                   std::to_string(*result.failed_pair) + ": " +
                                   result.failure_reason);
    traj = result.trajectory;
  } else {
    throw fusemap::InvalidParameter("unknown source '" + source +
                                    "' (expected odometry or icp)");
  }

  fusemap::save_trajectory_csv(out_csv, traj);
  std::cout << "wrote " << traj.size() << " poses to " << out_csv << "\n";
  return 0;
}

int run_map(const std::string& dataset, const std::string& trajectory_csv, double resolution,
            bool carve_free, const std::string& out_ply, const std::string& out_voxels) {
  const auto ds = fusemap::load_dataset(dataset);
  const auto traj = fusemap::load_trajectory_csv(trajectory_csv);
  const auto framesets = fusemap::pair_streams(ds.poses, ds.depths).framesets;

  // The trajectory names the frames to fuse by their depth timestamps.
  std::map<std::int64_t, const fusemap::FrameSet*> by_ts;
  for (const auto& fs : framesets) by_ts[fs.depth.timestamp_us] = &fs;
  std::vector<fusemap::FrameSet> selected;
  for (const auto& pose : traj.poses) {
    const auto it = by_ts.find(pose.timestamp_us);
    if (it == by_ts.end())
      throw fusemap::TimestampMismatch("trajectory timestamp " +
                                       std::to_string(pose.timestamp_us) +
                                       " has no matching depth frame");
    selected.push_back(*it->second);
  }

  fusemap::OccupancyOctree octree(resolution);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto& pose = traj.poses[i].transform;
    const auto cloud_world = fusemap::apply(pose, fusemap::deproject(selected[i].depth));
    octree.integrate(cloud_world, pose.translation(), fusemap::kMaxDepthRange, carve_free);
  }
  std::cout << "integrated " << selected.size() << " frames, " << octree.occupied_count()
            << " occupied voxels at " << nine(resolution) << " m\n";

  if (!out_ply.empty()) {
    const auto fused = fusemap::fuse_clouds(selected, traj, 0.0);
    fusemap::write_height_colored_ply(out_ply, fused.points);
    std::cout << "wrote " << fused.size() << " points to " << out_ply << "\n";
  }
  if (!out_voxels.empty()) {
    fusemap::save_voxels_csv(out_voxels, octree.export_voxels());
    std::cout << "wrote " << octree.occupied_count() << " voxels to " << out_voxels << "\n";
  }
  return 0;
}

int run_bench(const std::string& sweep_path, const std::string& out_dir, int reps) {
  auto spec = fusemap::load_sweep_spec(sweep_path);
  if (reps > 0) spec.repetitions = reps;
  const auto result = fusemap::run_sweep(spec);
  fusemap::emit_report(result, out_dir);
  std::cout << "wrote " << result.rows.size() << " rows to " << out_dir
            << "/results.csv (+ rmse.svg, fitness.svg, time.svg)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fuses a high-rate pose stream with a depth stream into registered point clouds, "
               "trajectories, and occupancy maps"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset from a scene file");
  std::string synth_scene, synth_out;
  std::uint64_t synth_seed = 0;
  bool synth_overwrite = false;
  synth->add_option("--scene", synth_scene, "Scene JSON file")->required();
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--seed", synth_seed, "Noise seed")->required();
  synth->add_flag("--overwrite", synth_overwrite, "Replace an existing dataset");

  // sync
  auto* sync = app.add_subcommand("sync", "Pair depth frames with nearest poses");
  std::string sync_dataset;
  std::int64_t sync_max_offset = fusemap::kDefaultMaxOffsetUs;
  bool sync_stats = false;
  sync->add_option("--dataset", sync_dataset, "Dataset directory")->required();
  sync->add_option("--max-offset-us", sync_max_offset, "Drop pairs with larger |offset|");
  sync->add_flag("--stats", sync_stats, "Print aggregate pairing statistics");

  // align
  auto* align = app.add_subcommand("align", "Register one depth frame onto another");
  std::string align_dataset, align_method = "p2l", align_init = "identity", align_out;
  std::size_t align_a = 0, align_b = 0;
  double align_max_dist = 0.05, align_voxel = 0.0;
  int align_decimate = 1;
  align->add_option("--dataset", align_dataset, "Dataset directory")->required();
  align->add_option("--frame-a", align_a, "Target frameset index")->required();
  align->add_option("--frame-b", align_b, "Source frameset index")->required();
  align->add_option("--method", align_method, "p2p or p2l");
  align->add_option("--init", align_init, "identity or odometry");
  align->add_option("--max-dist", align_max_dist, "Max correspondence distance (m)");
  align->add_option("--decimate", align_decimate, "Depth decimation factor (1, 2, 4, 8)");
  align->add_option("--voxel", align_voxel, "Voxel downsample size (m, 0 = off)");
  align->add_option("--out", align_out, "Write the result row to this CSV");

  // trajectory
  auto* traj = app.add_subcommand("trajectory", "Chain keyframe poses into a trajectory CSV");
  std::string traj_dataset, traj_source = "icp", traj_init = "odometry", traj_method = "p2l",
              traj_out;
  double traj_interval = 1.0, traj_max_dist = 0.05, traj_voxel = 0.0;
  int traj_decimate = 1;
  traj->add_option("--dataset", traj_dataset, "Dataset directory")->required();
  traj->add_option("--source", traj_source, "odometry or icp");
  traj->add_option("--init", traj_init, "identity or odometry");
  traj->add_option("--interval", traj_interval, "Keyframe interval (s)");
  traj->add_option("--method", traj_method, "p2p or p2l");
  traj->add_option("--max-dist", traj_max_dist, "Max correspondence distance (m)");
  traj->add_option("--decimate", traj_decimate, "Depth decimation factor (1, 2, 4, 8)");
  traj->add_option("--voxel", traj_voxel, "Voxel downsample size (m, 0 = off)");
  traj->add_option("--out", traj_out, "Output trajectory CSV")->required();

  // map
  auto* map_cmd = app.add_subcommand("map", "Fuse frames along a trajectory into an occupancy map");
  std::string map_dataset, map_traj, map_ply, map_voxels;
  double map_resolution = 0.05;
  bool map_carve = false;
  map_cmd->add_option("--dataset", map_dataset, "Dataset directory")->required();
  map_cmd->add_option("--trajectory", map_traj, "Trajectory CSV naming the frames to fuse")
      ->required();
  map_cmd->add_option("--resolution", map_resolution, "Voxel size (m)");
  map_cmd->add_flag("--carve-free", map_carve, "Carve free space along sensor rays");
  map_cmd->add_option("--out-ply", map_ply, "Write the fused cloud as binary PLY");
  map_cmd->add_option("--out-voxels", map_voxels, "Write occupied voxels as CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "Run a parameter sweep and write CSV + charts");
  std::string bench_sweep, bench_out;
  int bench_reps = 0;
  bench->add_option("--sweep", bench_sweep, "Sweep spec JSON file")->required();
  bench->add_option("--out", bench_out, "Report output directory")->required();
  bench->add_option("--reps", bench_reps, "Override timing repetitions");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return run_synth(synth_scene, synth_out, synth_seed, synth_overwrite);
    if (sync->parsed()) return run_sync(sync_dataset, sync_max_offset, sync_stats);
    if (align->parsed())
      return run_align(align_dataset, align_a, align_b, align_method, align_init, align_max_dist,
                       align_decimate, align_voxel, align_out);
    if (traj->parsed())
      return run_trajectory(traj_dataset, traj_source, traj_init, traj_interval, traj_method,
                            traj_max_dist, traj_decimate, traj_voxel, traj_out);
    if (map_cmd->parsed())
      return run_map(map_dataset, map_traj, map_resolution, map_carve, map_ply, map_voxels);
    if (bench->parsed()) return run_bench(bench_sweep, bench_out, bench_reps);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const fusemap::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fusemap::PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fusemap::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
