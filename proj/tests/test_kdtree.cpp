#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fusemap/kdtree.hpp"
#include "test_support.hpp"

using namespace fusemap;

namespace {

// Linear-scan oracle with the same (distance, index) tie-break.
std::vector<KdTree::Neighbor> brute_knn(const std::vector<Eigen::Vector3d>& pts,
                                        const Eigen::Vector3d& q, std::size_t k) {
  std::vector<KdTree::Neighbor> all;
  all.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) all.push_back({i, (pts[i] - q).norm()});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST_CASE("kdtree trivial targets", "[kdtree]") {
  KdTree single(std::vector<Eigen::Vector3d>{Eigen::Vector3d(1.0, 2.0, 3.0)});
  const auto nb = single.nearest(Eigen::Vector3d(10.0, 0.0, 0.0));
  CHECK(nb.index == 0);

  std::mt19937_64 rng(31);
  const auto cloud = test_support::random_cloud(rng, 100);
  KdTree tree(cloud.points);
  const auto hit = tree.nearest(cloud.points[42]);
  CHECK(hit.index == 42);
  CHECK(hit.distance == 0.0);

  CHECK_THROWS_AS(KdTree({}), EmptyCloud);
}

TEST_CASE("kdtree matches linear scan on 1000 random points", "[kdtree]") {
  std::mt19937_64 rng(37);
  const auto cloud = test_support::random_cloud(rng, 1000, 2.0);
  KdTree tree(cloud.points);

  std::uniform_real_distribution<double> uni(-2.5, 2.5);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d q(uni(rng), uni(rng), uni(rng));

    const auto expected = brute_knn(cloud.points, q, 5);
    const auto got = tree.knn(q, 5);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].index == expected[i].index);
      CHECK(got[i].distance == Catch::Approx(expected[i].distance).margin(1e-12));
    }
    CHECK(tree.nearest(q).index == expected[0].index);

    const double r = 0.4;
    std::vector<std::size_t> want_radius;
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
      if ((cloud.points[i] - q).squaredNorm() <= r * r) want_radius.push_back(i);
    CHECK(tree.radius(q, r) == want_radius);
  }
}

TEST_CASE("kdtree handles duplicate coordinates", "[kdtree]") {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(1.0, 2.0, static_cast<double>(i % 5));
  KdTree tree(pts);
  const auto got = tree.knn({1.0, 2.0, 0.0}, 3);
  const auto expected = brute_knn(pts, {1.0, 2.0, 0.0}, 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(got[i].index == expected[i].index);
}
