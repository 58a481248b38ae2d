#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "fusemap/trajectory.hpp"
#include "test_support.hpp"

namespace {

using test_support::max_abs_diff;

using test_support::render_box;

fusemap::CameraIntrinsics small_intrinsics() {
  fusemap::CameraIntrinsics intr;
  intr.width = 160;
  intr.height = 120;
  intr.fx = intr.fy = 120.0;
  intr.cx = 80.0;
  intr.cy = 60.0;
  intr.depth_scale = 0.001;
  return intr;
}

// Camera translating and panning inside a box room, one frame every 0.2 s.
// pose.transform carries the tracker pose, i.e. world_from_cam ∘ mount⁻¹.
std::vector<fusemap::FrameSet> box_framesets(std::size_t count, const fusemap::SE3& mount,
                                             std::vector<fusemap::SE3>* truth = nullptr) {
  // All four side walls must stay inside the field of view: a plane-based
  // alignment of this scene is only fully constrained when walls orthogonal
  // to every axis are visible.
  const auto intr = small_intrinsics();
  const Eigen::Vector3d box_min(-1.5, -1.5, -1.0);
  const Eigen::Vector3d box_max(1.5, 1.5, 4.0);
  std::vector<fusemap::FrameSet> framesets;
  for (std::size_t k = 0; k < count; ++k) {
    const double s = static_cast<double>(k);
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(s * 2.0 * M_PI / 180.0, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const fusemap::SE3 world_from_cam(rot, Eigen::Vector3d(0.05 * s, 0.02 * s, 0.1 * s));
    if (truth) truth->push_back(world_from_cam);
    const std::int64_t ts = static_cast<std::int64_t>(k) * 200000;
    fusemap::FrameSet fs;
    fs.depth = render_box(intr, world_from_cam, ts, box_min, box_max);
    fs.pose.timestamp_us = ts;
    fs.pose.transform = fusemap::compose(world_from_cam, fusemap::inverse(mount));
    framesets.push_back(std::move(fs));
  }
  return framesets;
}

}  // namespace

TEST_CASE("accumulating relative transforms chains poses", "[trajectory]") {
  SECTION("no relatives keeps only the initial pose") {
    std::mt19937_64 rng(3);
    const auto initial = test_support::random_se3(rng);
    const auto traj = fusemap::accumulate(initial, {}, {42});
    REQUIRE(traj.size() == 1);
    CHECK(traj.poses[0].timestamp_us == 42);
    CHECK(max_abs_diff(traj.poses[0].transform.matrix(), initial.matrix()) == 0.0);
  }

  SECTION("repeated pure translations add up") {
    const fusemap::SE3 step(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.1, 0.0, 0.0));
    std::vector<fusemap::SE3> relatives(10, step);
    std::vector<std::int64_t> ts;
    for (int k = 0; k <= 10; ++k) ts.push_back(k * 100);
    const auto traj = fusemap::accumulate(fusemap::SE3(), relatives, ts);
    REQUIRE(traj.size() == 11);
    CHECK((traj.poses.back().transform.translation() - Eigen::Vector3d(1.0, 0.0, 0.0)).norm() <
          1e-12);
  }

  SECTION("round trip through relative transforms reproduces a pose list") {
    std::mt19937_64 rng(11);
    std::vector<fusemap::SE3> truth;
    std::vector<std::int64_t> ts;
    for (int k = 0; k < 100; ++k) {
      truth.push_back(test_support::random_se3(rng));
      ts.push_back(k * 1000);
    }
    std::vector<fusemap::SE3> relatives;
    for (std::size_t k = 1; k < truth.size(); ++k)
      relatives.push_back(fusemap::relative(truth[k - 1], truth[k]));
    const auto traj = fusemap::accumulate(truth[0], relatives, ts);
    REQUIRE(traj.size() == truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k)
      CHECK(max_abs_diff(traj.poses[k].transform.matrix(), truth[k].matrix()) < 1e-9);
  }

  SECTION("input validation") {
    CHECK_THROWS_AS(fusemap::accumulate(fusemap::SE3(), {fusemap::SE3()}, {0}),
                    fusemap::LengthMismatch);
    CHECK_THROWS_AS(fusemap::accumulate(fusemap::SE3(), {fusemap::SE3()}, {5, 5}),
                    fusemap::UnsortedStream);
  }
}

TEST_CASE("odometry trajectory composes the mount transform", "[trajectory]") {
  const auto framesets = box_framesets(4, fusemap::SE3());

  SECTION("identity mount returns tracker poses verbatim") {
    const auto traj = fusemap::odometry_trajectory(framesets, fusemap::SE3());
    REQUIRE(traj.size() == framesets.size());
    for (std::size_t k = 0; k < framesets.size(); ++k) {
      CHECK(traj.poses[k].timestamp_us == framesets[k].depth.timestamp_us);
      CHECK(max_abs_diff(traj.poses[k].transform.matrix(),
                         framesets[k].pose.transform.matrix()) == 0.0);
    }
  }

  SECTION("a translation-only mount shifts each pose by the rotated offset") {
    const fusemap::SE3 mount(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.03, -0.01, 0.02));
    const auto traj = fusemap::odometry_trajectory(framesets, mount);
    for (std::size_t k = 0; k < framesets.size(); ++k) {
      const auto& tracker = framesets[k].pose.transform;
      const Eigen::Vector3d expected =
          tracker.translation() + tracker.rotation() * mount.translation();
      CHECK((traj.poses[k].transform.translation() - expected).norm() < 1e-12);
    }
  }

  SECTION("single frameset gives a single pose") {
    const auto traj = fusemap::odometry_trajectory({framesets[0]}, fusemap::SE3());
    CHECK(traj.size() == 1);
  }

  SECTION("empty input is rejected") {
    CHECK_THROWS_AS(fusemap::odometry_trajectory({}, fusemap::SE3()), fusemap::EmptyInput);
  }
}

TEST_CASE("registered trajectory tracks the true motion", "[trajectory]") {
  std::vector<fusemap::SE3> truth_poses;
  const fusemap::SE3 mount(test_support::rot_z(0.1), Eigen::Vector3d(0.02, 0.0, 0.01));
  const auto framesets = box_framesets(5, mount, &truth_poses);

  fusemap::IcpConfig cfg;
  cfg.method = fusemap::IcpMethod::point_to_plane;
  cfg.max_correspondence_distance = 0.3;
  // Depth quantization puts a ~1 mm noise floor under the metrics; stop once
  // changes fall below it instead of chasing micrometer jitter.
  cfg.rel_rmse_eps = 1e-5;
  cfg.rel_fitness_eps = 1e-5;
  const auto result = fusemap::icp_trajectory(framesets, mount, cfg,
                                              fusemap::InitMode::odometry_prior, 1, 0.0);
  REQUIRE(!result.failed_pair.has_value());
  REQUIRE(result.trajectory.size() == framesets.size());
  REQUIRE(result.pair_results.size() == framesets.size() - 1);

  fusemap::Trajectory truth;
  for (std::size_t k = 0; k < truth_poses.size(); ++k)
    truth.poses.push_back({static_cast<std::int64_t>(k) * 200000, truth_poses[k]});

  SECTION("anchored at the first odometry pose") {
    CHECK(max_abs_diff(result.trajectory.poses[0].transform.matrix(),
                       truth_poses[0].matrix()) < 1e-12);
  }

  SECTION("close to ground truth") {
    const auto stats = fusemap::compare(truth, result.trajectory, fusemap::AlignMode::none);
    CHECK(stats.ate_rmse < 1e-2);
  }

  SECTION("odometry initialization needs no more iterations than identity") {
    const auto identity_run = fusemap::icp_trajectory(framesets, mount, cfg,
                                                      fusemap::InitMode::identity, 1, 0.0);
    REQUIRE(!identity_run.failed_pair.has_value());
    std::size_t prior_iters = 0;
    std::size_t identity_iters = 0;
    for (const auto& r : result.pair_results) prior_iters += static_cast<std::size_t>(r.iterations);
    for (const auto& r : identity_run.pair_results)
      identity_iters += static_cast<std::size_t>(r.iterations);
    CHECK(prior_iters <= identity_iters);
  }
}

TEST_CASE("per-pair processing time drops with decimation", "[trajectory]") {
  const auto framesets = box_framesets(2, fusemap::SE3());
  fusemap::IcpConfig cfg;
  cfg.max_correspondence_distance = 0.3;
  double previous = std::numeric_limits<double>::infinity();
  for (const int factor : {1, 2, 4, 8}) {
    // Best of three runs per factor shields the strict ordering from
    // scheduler noise without hiding the real work ratio.
    double elapsed = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 3; ++rep) {
      const auto run = fusemap::icp_trajectory(framesets, fusemap::SE3(), cfg,
                                               fusemap::InitMode::odometry_prior, factor, 0.0);
      REQUIRE(!run.failed_pair.has_value());
      elapsed = std::min(elapsed, run.pair_results[0].elapsed_s);
    }
    CHECK(elapsed < previous);
    previous = elapsed;
  }
}

TEST_CASE("a failing pair aborts with a partial trajectory", "[trajectory]") {
  auto framesets = box_framesets(4, fusemap::SE3());
  // Blank the third frame: deprojection yields an empty cloud, so pair 1
  // (frames 1 and 2) cannot be registered.
  std::fill(framesets[2].depth.values.begin(), framesets[2].depth.values.end(), 0);

  fusemap::IcpConfig cfg;
  cfg.max_correspondence_distance = 0.3;
  const auto result = fusemap::icp_trajectory(framesets, fusemap::SE3(), cfg,
                                              fusemap::InitMode::odometry_prior, 2, 0.08);
  REQUIRE(result.failed_pair.has_value());
  CHECK(*result.failed_pair == 1);
  CHECK(!result.failure_reason.empty());
  CHECK(result.pair_results.size() == 1);
  CHECK(result.trajectory.size() == 2);
}

TEST_CASE("registered trajectory validates its inputs", "[trajectory]") {
  const auto framesets = box_framesets(2, fusemap::SE3());
  fusemap::IcpConfig cfg;
  CHECK_THROWS_AS(fusemap::icp_trajectory({framesets[0]}, fusemap::SE3(), cfg,
                                          fusemap::InitMode::identity),
                  fusemap::InvalidParameter);
  CHECK_THROWS_AS(fusemap::icp_trajectory(framesets, fusemap::SE3(), cfg,
                                          fusemap::InitMode::identity, 3),
                  fusemap::InvalidFactor);
  CHECK_THROWS_AS(fusemap::icp_trajectory(framesets, fusemap::SE3(), cfg,
                                          fusemap::InitMode::identity, 1, -0.1),
                  fusemap::InvalidParameter);
}

TEST_CASE("trajectory comparison measures translation error", "[trajectory]") {
  std::mt19937_64 rng(17);
  fusemap::Trajectory a;
  for (int k = 0; k < 50; ++k) a.poses.push_back({k * 1000, test_support::random_se3(rng)});

  SECTION("a trajectory matches itself exactly") {
    const auto stats = fusemap::compare(a, a, fusemap::AlignMode::none);
    CHECK(stats.ate_rmse == 0.0);
    CHECK(stats.max_error == 0.0);
    CHECK(stats.per_axis_rmse.norm() == 0.0);
  }

  SECTION("a uniform offset is reported exactly without alignment") {
    fusemap::Trajectory b = a;
    for (auto& pose : b.poses)
      pose.transform = fusemap::SE3(pose.transform.rotation(),
                                    pose.transform.translation() + Eigen::Vector3d(0.1, 0.0, 0.0));
    const auto stats = fusemap::compare(a, b, fusemap::AlignMode::none);
    CHECK(stats.ate_rmse == Catch::Approx(0.1).margin(1e-12));
    CHECK(stats.max_error == Catch::Approx(0.1).margin(1e-12));
    CHECK(stats.per_axis_rmse.x() == Catch::Approx(0.1).margin(1e-12));
    CHECK(stats.per_axis_rmse.y() == 0.0);
  }

  SECTION("rigid alignment removes a global motion") {
    const auto g = test_support::random_se3(rng);
    fusemap::Trajectory b = a;
    for (auto& pose : b.poses) pose.transform = fusemap::compose(g, pose.transform);
    const auto aligned = fusemap::compare(a, b, fusemap::AlignMode::rigid);
    CHECK(aligned.ate_rmse < 1e-9);

    const auto unaligned = fusemap::compare(a, b, fusemap::AlignMode::none);
    CHECK(aligned.path_length == Catch::Approx(unaligned.path_length).margin(1e-9));
    const auto self = fusemap::compare(a, a, fusemap::AlignMode::none);
    CHECK(aligned.path_length == Catch::Approx(self.path_length).margin(1e-9));
  }

  SECTION("mismatched inputs are rejected") {
    fusemap::Trajectory b = a;
    b.poses.pop_back();
    CHECK_THROWS_AS(fusemap::compare(a, b, fusemap::AlignMode::none), fusemap::LengthMismatch);

    b = a;
    b.poses[10].timestamp_us += 1500;
    CHECK_THROWS_AS(fusemap::compare(a, b, fusemap::AlignMode::none), fusemap::TimestampMismatch);

    b = a;
    b.poses[10].timestamp_us += 800;  // within the 1 ms tolerance
    CHECK_NOTHROW(fusemap::compare(a, b, fusemap::AlignMode::none));
  }
}

TEST_CASE("trajectory CSV round trip", "[trajectory]") {
  std::mt19937_64 rng(23);
  fusemap::Trajectory traj;
  for (int k = 0; k < 20; ++k) traj.poses.push_back({k * 33333, test_support::random_se3(rng)});

  const auto dir = std::filesystem::temp_directory_path() / "fusemap_trajectory_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "trajectory.csv";
  fusemap::save_trajectory_csv(path, traj);

  SECTION("written header is the documented format") {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "timestamp_us,tx,ty,tz,qx,qy,qz,qw");
  }

  SECTION("load reproduces poses to file precision") {
    const auto loaded = fusemap::load_trajectory_csv(path);
    REQUIRE(loaded.size() == traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
      CHECK(loaded.poses[k].timestamp_us == traj.poses[k].timestamp_us);
      CHECK(max_abs_diff(loaded.poses[k].transform.matrix(), traj.poses[k].transform.matrix()) <
            1e-7);
    }
  }

  SECTION("a second round trip is stable") {
    const auto loaded = fusemap::load_trajectory_csv(path);
    const auto path2 = dir / "trajectory2.csv";
    fusemap::save_trajectory_csv(path2, loaded);
    const auto reloaded = fusemap::load_trajectory_csv(path2);
    REQUIRE(reloaded.size() == loaded.size());
    for (std::size_t k = 0; k < loaded.size(); ++k)
      CHECK(max_abs_diff(reloaded.poses[k].transform.matrix(),
                         loaded.poses[k].transform.matrix()) < 1e-8);
  }

  SECTION("missing and malformed files are rejected") {
    CHECK_THROWS_AS(fusemap::load_trajectory_csv(dir / "nope.csv"), fusemap::MissingFile);
    const auto bad = dir / "bad.csv";
    std::ofstream(bad) << "time,stamp\n";
    CHECK_THROWS_AS(fusemap::load_trajectory_csv(bad), fusemap::CorruptHeader);
  }
}
