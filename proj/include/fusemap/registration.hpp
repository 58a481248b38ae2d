#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "fusemap/errors.hpp"
#include "fusemap/geometry.hpp"
#include "fusemap/kdtree.hpp"
#include "fusemap/point_cloud.hpp"

namespace fusemap {

enum class IcpMethod { point_to_point, point_to_plane };

struct IcpConfig {
  IcpMethod method = IcpMethod::point_to_point;
  double max_correspondence_distance = 0.05;  // meters
  int max_iterations = 50;
  double rel_rmse_eps = 1e-6;
  double rel_fitness_eps = 1e-6;
  SE3 init;

  void validate() const {
    if (!(max_correspondence_distance > 0.0))
      throw InvalidParameter("max_correspondence_distance must be > 0");
    if (max_iterations < 1) throw InvalidParameter("max_iterations must be >= 1");
    if (rel_rmse_eps < 0.0 || rel_fitness_eps < 0.0)
      throw InvalidParameter("convergence thresholds must be >= 0");
  }
};

/// One solver iteration as logged for convergence analysis. The objective is
/// the method's least-squares cost over that iteration's correspondence set,
/// before and after applying the iteration's transform update.
struct IcpIteration {
  double fitness = 0.0;
  double inlier_rmse = 0.0;
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::size_t solver_pairs = 0;
};

struct IcpResult {
  SE3 transform;  // maps source into the target frame
  double fitness = 0.0;
  double inlier_rmse = 0.0;
  std::size_t num_inliers = 0;
  int iterations = 0;
  bool converged = false;
  double elapsed_s = 0.0;
  std::vector<IcpIteration> history;
};

/// Exact nearest-neighbor index over the target points.
using SpatialIndex = KdTree;

inline SpatialIndex build_index(const PointCloud& target) { return SpatialIndex(target.points); }

struct EvalMetrics {
  double fitness = 0.0;
  double inlier_rmse = 0.0;
  std::size_t num_inliers = 0;  // 0 means both metrics are degenerate
};

namespace detail {

inline EvalMetrics evaluate_indexed(const PointCloud& source, const SpatialIndex& index,
                                    const SE3& t, double max_distance) {
  EvalMetrics m;
  if (source.empty()) return m;
  double sq_sum = 0.0;
  for (const auto& p : source.points) {
    const auto nb = index.nearest(apply(t, p));
    if (nb.distance <= max_distance) {
      ++m.num_inliers;
      sq_sum += nb.distance * nb.distance;
    }
  }
  m.fitness = static_cast<double>(m.num_inliers) / static_cast<double>(source.size());
  if (m.num_inliers > 0) m.inlier_rmse = std::sqrt(sq_sum / static_cast<double>(m.num_inliers));
  return m;
}

/// Least-squares rigid fit mapping points x onto y (Kabsch/Umeyama without
/// scale): SVD of the cross-covariance, negating the last singular vector when
/// the raw solution would be a reflection.
inline SE3 fit_rigid(const std::vector<Eigen::Vector3d>& x, const std::vector<Eigen::Vector3d>& y) {
  const double n = static_cast<double>(x.size());
  Eigen::Vector3d mx = Eigen::Vector3d::Zero();
  Eigen::Vector3d my = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) cov += (x[i] - mx) * (y[i] - my).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d v = svd.matrixV();
  if ((v * svd.matrixU().transpose()).determinant() < 0.0) v.col(2) = -v.col(2);
  const Eigen::Matrix3d rot = v * svd.matrixU().transpose();
  return SE3(rot, my - rot * mx);
}

struct Correspondence {
  Eigen::Vector3d source_world;  // source point under the current transform
  std::size_t target_index = 0;
};

/// Nearest-target pairing within max_distance; use_target can veto targets
/// (point-to-plane skips points whose normal estimate was degenerate).
template <typename UseTarget>
std::vector<Correspondence> match(const PointCloud& source, const SpatialIndex& index, const SE3& t,
                                  double max_distance, UseTarget use_target) {
  std::vector<Correspondence> pairs;
  for (const auto& p : source.points) {
    const Eigen::Vector3d q = apply(t, p);
    const auto nb = index.nearest(q);
    if (nb.distance <= max_distance && use_target(nb.index)) pairs.push_back({q, nb.index});
  }
  return pairs;
}

inline SE3 rotation_vector_increment(const Eigen::Matrix<double, 6, 1>& delta) {
  const Eigen::Vector3d omega = delta.head<3>();
  const double angle = omega.norm();
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  if (angle > 0.0) rot = Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
  return SE3(rot, delta.tail<3>());
}

struct SolveStep {
  SE3 update;  // left increment: new transform = update ∘ current
  IcpIteration log;
};

/// Shared iteration loop. solve(index, current) produces one update plus its
/// objective log; termination needs both the fitness and rmse change to drop
/// to the configured thresholds. Loop order is fixed, so identical inputs give
/// bit-identical results.
template <typename Solve>
IcpResult iterate(const PointCloud& source, const PointCloud& target, const IcpConfig& cfg,
                  Solve solve) {
  const auto start = std::chrono::steady_clock::now();
  const SpatialIndex index = build_index(target);

  IcpResult result;
  result.transform = cfg.init;
  EvalMetrics prev =
      evaluate_indexed(source, index, result.transform, cfg.max_correspondence_distance);
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    SolveStep step = solve(index, result.transform);
    result.transform = compose(step.update, result.transform);
    result.iterations = iter + 1;

    const EvalMetrics cur =
        evaluate_indexed(source, index, result.transform, cfg.max_correspondence_distance);
    step.log.fitness = cur.fitness;
    step.log.inlier_rmse = cur.inlier_rmse;
    result.history.push_back(step.log);

    const bool settled = std::abs(cur.fitness - prev.fitness) <= cfg.rel_fitness_eps &&
                         std::abs(cur.inlier_rmse - prev.inlier_rmse) <= cfg.rel_rmse_eps;
    prev = cur;
    if (settled) {
      result.converged = true;
      break;
    }
  }
  result.fitness = prev.fitness;
  result.inlier_rmse = prev.inlier_rmse;
  result.num_inliers = prev.num_inliers;
  result.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace detail

/// Fitness (inlier fraction of source points) and RMSE of the inlier
/// nearest-neighbor distances for source transformed by t against target.
inline EvalMetrics evaluate(const PointCloud& source, const PointCloud& target, const SE3& t,
                            double max_distance) {
  const SpatialIndex index = build_index(target);
  return detail::evaluate_indexed(source, index, t, max_distance);
}

/// Point-to-point ICP: alternates nearest-neighbor correspondence with the
/// closed-form rigid fit, applied as a left increment to the running transform.
inline IcpResult register_point_to_point(const PointCloud& source, const PointCloud& target,
                                         const IcpConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw EmptyCloud("source cloud is empty");
  if (target.empty()) throw EmptyCloud("target cloud is empty");

  return detail::iterate(source, target, cfg, [&](const SpatialIndex& index, const SE3& current) {
    const auto pairs = detail::match(source, index, current, cfg.max_correspondence_distance,
                                     [](std::size_t) { return true; });
    if (pairs.size() < 3)
      throw DegenerateCorrespondences("fewer than 3 correspondence pairs within max distance");

    std::vector<Eigen::Vector3d> x;
    std::vector<Eigen::Vector3d> y;
    x.reserve(pairs.size());
    y.reserve(pairs.size());
    for (const auto& c : pairs) {
      x.push_back(c.source_world);
      y.push_back(target.points[c.target_index]);
    }
    detail::SolveStep step;
    step.update = detail::fit_rigid(x, y);
    step.log.solver_pairs = pairs.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      step.log.objective_before += (x[i] - y[i]).squaredNorm();
      step.log.objective_after += (apply(step.update, x[i]) - y[i]).squaredNorm();
    }
    return step;
  });
}

/// Point-to-plane ICP: per iteration minimizes the sum of squared
/// point-to-plane residuals ((R·p + t − q)·n)² under a small-angle
/// linearization, solving the 6×6 normal equations for (ω, t).
inline IcpResult register_point_to_plane(const PointCloud& source, const PointCloud& target,
                                         const IcpConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw EmptyCloud("source cloud is empty");
  if (target.empty()) throw EmptyCloud("target cloud is empty");
  if (!target.has_normals()) throw MissingNormals("point-to-plane requires target normals");

  return detail::iterate(source, target, cfg, [&](const SpatialIndex& index, const SE3& current) {
    const auto pairs = detail::match(source, index, current, cfg.max_correspondence_distance,
                                     [&](std::size_t i) { return target.normal_valid(i); });
    if (pairs.size() < 3)
      throw DegenerateCorrespondences("fewer than 3 correspondence pairs within max distance");

    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    detail::SolveStep step;
    step.log.solver_pairs = pairs.size();
    for (const auto& c : pairs) {
      const Eigen::Vector3d& q = target.points[c.target_index];
      const Eigen::Vector3d& n = target.normals[c.target_index];
      const double r = (c.source_world - q).dot(n);
      Eigen::Matrix<double, 6, 1> jac;
      jac.head<3>() = c.source_world.cross(n);
      jac.tail<3>() = n;
      h += jac * jac.transpose();
      g += jac * r;
      step.log.objective_before += r * r;
    }

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(h);
    const double lo = eig.eigenvalues()(0);
    const double hi = eig.eigenvalues()(5);
    if (!(lo > 0.0) || hi / lo > 1e12)
      throw SingularSystem("point-to-plane system is ill-conditioned (condition > 1e12)");

    const Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-g);
    step.update = detail::rotation_vector_increment(delta);
    for (const auto& c : pairs) {
      const double r = (apply(step.update, c.source_world) - target.points[c.target_index])
                           .dot(target.normals[c.target_index]);
      step.log.objective_after += r * r;
    }
    return step;
  });
}

/// Dispatch on cfg.method.
inline IcpResult register_clouds(const PointCloud& source, const PointCloud& target,
                                 const IcpConfig& cfg) {
  return cfg.method == IcpMethod::point_to_point ? register_point_to_point(source, target, cfg)
                                                 : register_point_to_plane(source, target, cfg);
}

}  // namespace fusemap
