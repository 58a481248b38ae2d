#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <unordered_map>

#include "fusemap/depth.hpp"
#include "test_support.hpp"

using namespace fusemap;

namespace {

CameraIntrinsics tiny_intrinsics(int w = 8, int h = 8) {
  CameraIntrinsics k;
  k.width = w;
  k.height = h;
  k.fx = k.fy = 2.0;
  k.cx = w / 2.0;
  k.cy = h / 2.0;
  k.depth_scale = 0.001;
  return k;
}

DepthImage blank_image(const CameraIntrinsics& k, std::int64_t ts = 0) {
  DepthImage img;
  img.intrinsics = k;
  img.values.assign(static_cast<std::size_t>(k.width) * k.height, 0);
  img.timestamp_us = ts;
  return img;
}

}  // namespace

TEST_CASE("deproject pinhole model", "[depth]") {
  auto img = blank_image(tiny_intrinsics());
  img.at(4, 4) = 1500;  // principal point, z = 1.5 m
  img.at(6, 4) = 2000;  // u = cx + fx with z = 2 m -> x = 2 m

  const PointCloud pc = deproject(img);
  REQUIRE(pc.size() == 2);
  CHECK(test_support::max_abs_diff(pc.points[0], Eigen::Vector3d(0, 0, 1.5)) < 1e-12);
  CHECK(test_support::max_abs_diff(pc.points[1], Eigen::Vector3d(2, 0, 2)) < 1e-12);
  CHECK_FALSE(pc.has_normals());

  CHECK(deproject(blank_image(tiny_intrinsics())).empty());
}

TEST_CASE("deproject round trip recovers pixels and raw depth", "[depth]") {
  std::mt19937_64 rng(41);
  CameraIntrinsics k = CameraIntrinsics::synthetic_default();
  k.width = 64;
  k.height = 48;
  k.cx = 32.0;
  k.cy = 24.0;
  auto img = blank_image(k);
  std::uniform_int_distribution<int> draw(0, 4000);
  for (auto& v : img.values) {
    const int d = draw(rng);
    v = static_cast<std::uint16_t>(d > 800 ? d : 0);  // leave holes
  }

  const PointCloud pc = deproject(img);
  std::size_t checked = 0;
  for (const auto& p : pc.points) {
    const double u = p.x() * k.fx / p.z() + k.cx;
    const double v = p.y() * k.fy / p.z() + k.cy;
    const double raw = p.z() / k.depth_scale;
    const int ui = static_cast<int>(std::lround(u));
    const int vi = static_cast<int>(std::lround(v));
    CHECK(std::abs(u - ui) <= 0.5);
    CHECK(std::abs(v - vi) <= 0.5);
    CHECK(std::abs(raw - img.at(ui, vi)) <= 1.0);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("decimate block median", "[depth]") {
  SECTION("factor 1 is the identity") {
    auto img = blank_image(tiny_intrinsics());
    img.at(3, 2) = 777;
    const DepthImage out = decimate(img, 1);
    CHECK(out.values == img.values);
    CHECK(out.intrinsics.fx == img.intrinsics.fx);
  }

  SECTION("constant image keeps its value at quarter dims") {
    auto img = blank_image(tiny_intrinsics(16, 12));
    std::fill(img.values.begin(), img.values.end(), 1234);
    const DepthImage out = decimate(img, 4);
    CHECK(out.width() == 4);
    CHECK(out.height() == 3);
    for (auto v : out.values) CHECK(v == 1234);
    CHECK(out.intrinsics.fx == Catch::Approx(img.intrinsics.fx / 4.0));
    CHECK(out.timestamp_us == img.timestamp_us);
  }

  SECTION("even-count median of nonzero values rounds to nearest") {
    auto img = blank_image(tiny_intrinsics(2, 2));
    img.at(0, 0) = 0;
    img.at(1, 0) = 0;
    img.at(0, 1) = 5;
    img.at(1, 1) = 7;
    const DepthImage out = decimate(img, 2);
    REQUIRE(out.values.size() == 1);
    CHECK(out.values[0] == 6);
  }

  SECTION("all-invalid block stays invalid") {
    auto img = blank_image(tiny_intrinsics(4, 4));
    img.at(0, 0) = 900;  // only the top-left block has data
    const DepthImage out = decimate(img, 2);
    CHECK(out.at(0, 0) == 900);
    CHECK(out.at(1, 1) == 0);
  }

  SECTION("invalid factor") {
    CHECK_THROWS_AS(decimate(blank_image(tiny_intrinsics()), 3), InvalidFactor);
  }
}

TEST_CASE("decimate point budget", "[depth]") {
  std::mt19937_64 rng(43);
  CameraIntrinsics k = tiny_intrinsics(50, 38);
  auto img = blank_image(k);
  std::uniform_int_distribution<int> draw(500, 3000);
  for (auto& v : img.values) v = static_cast<std::uint16_t>(draw(rng));

  const DepthImage dec = decimate(img, 4);
  const PointCloud pc = deproject(dec);
  CHECK(pc.size() <= static_cast<std::size_t>(((50 + 3) / 4) * ((38 + 3) / 4)));
}

TEST_CASE("voxel downsample centroids", "[depth]") {
  PointCloud single;
  single.points = {{0.3, 0.4, 0.5}};
  const PointCloud one = voxel_downsample(single, 0.1);
  REQUIRE(one.size() == 1);
  CHECK(test_support::max_abs_diff(one.points[0], single.points[0]) < 1e-15);

  PointCloud two;
  two.points = {{0.0, 0.0, 0.0}, {0.01, 0.0, 0.0}};
  const PointCloud merged = voxel_downsample(two, 0.1);
  REQUIRE(merged.size() == 1);
  CHECK(test_support::max_abs_diff(merged.points[0], Eigen::Vector3d(0.005, 0, 0)) < 1e-15);

  PointCloud corners;
  for (int x = 0; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y)
      for (int z = 0; z <= 1; ++z) corners.points.emplace_back(x, y, z);
  CHECK(voxel_downsample(corners, 0.5).size() == 8);

  CHECK_THROWS_AS(voxel_downsample(single, 0.0), InvalidParameter);
}

TEST_CASE("voxel downsample matches brute-force voxel hash", "[depth]") {
  std::mt19937_64 rng(47);
  const PointCloud pc = test_support::random_cloud(rng, 500, 1.0);
  const double voxel = 0.25;
  const PointCloud out = voxel_downsample(pc, voxel);

  // Oracle: map from integer voxel coordinates to member sums.
  std::unordered_map<std::string, std::pair<Eigen::Vector3d, int>> oracle;
  for (const auto& p : pc.points) {
    const auto key = std::to_string(static_cast<long long>(std::floor(p.x() / voxel))) + "," +
                     std::to_string(static_cast<long long>(std::floor(p.y() / voxel))) + "," +
                     std::to_string(static_cast<long long>(std::floor(p.z() / voxel)));
    auto& [sum, count] = oracle[key];
    if (count == 0) sum = Eigen::Vector3d::Zero();
    sum += p;
    ++count;
  }
  REQUIRE(out.size() == oracle.size());
  CHECK(out.size() <= pc.size());

  // Every output point is the centroid of exactly one oracle voxel and lies
  // inside that voxel's bounds.
  for (const auto& p : out.points) {
    const auto key = std::to_string(static_cast<long long>(std::floor(p.x() / voxel))) + "," +
                     std::to_string(static_cast<long long>(std::floor(p.y() / voxel))) + "," +
                     std::to_string(static_cast<long long>(std::floor(p.z() / voxel)));
    auto it = oracle.find(key);
    REQUIRE(it != oracle.end());
    const Eigen::Vector3d centroid = it->second.first / it->second.second;
    CHECK(test_support::max_abs_diff(p, centroid) < 1e-12);
  }
}

TEST_CASE("normal estimation on a plane", "[depth]") {
  PointCloud plane;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) plane.points.emplace_back(0.1 * i, 0.1 * j, 2.0);

  const PointCloud with_normals = estimate_normals(plane, 8, Eigen::Vector3d::Zero());
  REQUIRE(with_normals.normals.size() == plane.size());
  for (std::size_t i = 0; i < with_normals.size(); ++i) {
    CHECK(with_normals.degenerate[i] == 0);
    CHECK(test_support::max_abs_diff(with_normals.normals[i], Eigen::Vector3d(0, 0, -1)) < 1e-6);
  }
}

TEST_CASE("normal estimation degenerate and error cases", "[depth]") {
  PointCloud line;
  line.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const PointCloud est = estimate_normals(line, 3, Eigen::Vector3d(0, 0, 10));
  for (std::size_t i = 0; i < est.size(); ++i) {
    CHECK(est.degenerate[i] == 1);
    CHECK(est.normals[i].norm() == 0.0);
    CHECK_FALSE(est.normal_valid(i));
  }

  PointCloud pair;
  pair.points = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(estimate_normals(pair, 3, Eigen::Vector3d::Zero()), TooFewPoints);
  CHECK_THROWS_AS(estimate_normals(line, 2, Eigen::Vector3d::Zero()), InvalidParameter);
}

TEST_CASE("spatial filter basics", "[depth]") {
  SECTION("constant image unchanged") {
    auto img = blank_image(tiny_intrinsics(6, 5));
    std::fill(img.values.begin(), img.values.end(), 321);
    const DepthImage out = spatial_filter(img, 0.3, 10.0, 3);
    CHECK(out.values == img.values);
  }

  SECTION("alpha = 1 is the identity") {
    std::mt19937_64 rng(53);
    auto img = blank_image(tiny_intrinsics(7, 7));
    std::uniform_int_distribution<int> draw(0, 3000);
    for (auto& v : img.values) v = static_cast<std::uint16_t>(draw(rng));
    const DepthImage out = spatial_filter(img, 1.0, 25.0, 2);
    CHECK(out.values == img.values);
  }

  SECTION("hand-executed recursion on a short row") {
    // Row [100, 100, 200, 200], delta 50: the edge blocks the recursion, so
    // both constant halves are fixed points.
    auto img = blank_image(tiny_intrinsics(4, 1));
    img.values = {100, 100, 200, 200};
    const DepthImage out = spatial_filter(img, 0.5, 50.0, 1);
    CHECK(out.values == std::vector<std::uint16_t>{100, 100, 200, 200});

    // Row [100, 120, 100]: forward pass gives [100, 110, 105], backward pass
    // [103.75, 107.5, 105], rounded to [104, 108, 105].
    auto bump = blank_image(tiny_intrinsics(3, 1));
    bump.values = {100, 120, 100};
    const DepthImage smoothed = spatial_filter(bump, 0.5, 50.0, 1);
    CHECK(smoothed.values == std::vector<std::uint16_t>{104, 108, 105});
  }

  SECTION("invalid pixels stay invalid") {
    auto img = blank_image(tiny_intrinsics(4, 1));
    img.values = {100, 0, 104, 106};
    const DepthImage out = spatial_filter(img, 0.5, 50.0, 2);
    CHECK(out.values[1] == 0);
    CHECK(out.values[0] == 100);  // isolated by the hole
  }

  SECTION("parameter validation") {
    auto img = blank_image(tiny_intrinsics(4, 4));
    CHECK_THROWS_AS(spatial_filter(img, 0.0, 10.0, 1), InvalidParameter);
    CHECK_THROWS_AS(spatial_filter(img, 1.5, 10.0, 1), InvalidParameter);
    CHECK_THROWS_AS(spatial_filter(img, 0.5, -1.0, 1), InvalidParameter);
    CHECK_THROWS_AS(spatial_filter(img, 0.5, 10.0, 0), InvalidParameter);
  }
}

TEST_CASE("spatial filter never couples pixels across an edge", "[depth]") {
  // Two piecewise-constant images that differ only on the far side of a deep
  // gap; the near side must filter identically.
  const int w = 12, h = 6;
  auto a = blank_image(tiny_intrinsics(w, h));
  auto b = blank_image(tiny_intrinsics(w, h));
  std::mt19937_64 rng(59);
  std::uniform_int_distribution<int> lowdraw(995, 1005);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::uint16_t low = static_cast<std::uint16_t>(lowdraw(rng));
      if (u < w / 2) {
        a.at(u, v) = low;
        b.at(u, v) = low;
      } else {
        a.at(u, v) = 3000;
        b.at(u, v) = 4000;  // different far side, both > delta away from the near side
      }
    }
  }
  const DepthImage fa = spatial_filter(a, 0.4, 100.0, 2);
  const DepthImage fb = spatial_filter(b, 0.4, 100.0, 2);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w / 2; ++u) CHECK(fa.at(u, v) == fb.at(u, v));
}
