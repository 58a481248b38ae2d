#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cstdint>

#include "fusemap/errors.hpp"
#include "fusemap/point_cloud.hpp"

namespace fusemap {

/// Max-norm distance of R'R from the identity.
inline double rotation_drift(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

/// Nearest proper rotation to r (polar decomposition via SVD, reflection fixed).
inline Eigen::Matrix3d orthonormalized(const Eigen::Matrix3d& r) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d rot = u * v.transpose();
  if (rot.determinant() < 0.0) {
    u.col(2) = -u.col(2);
    rot = u * v.transpose();
  }
  return rot;
}

/// Rigid transform in SE(3). The rotation is kept orthonormal: whenever a
/// constructor or an operation detects drift above 1e-12 it snaps the matrix
/// back to the nearest rotation.
class SE3 {
 public:
  SE3() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

  SE3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {
    if (rotation_drift(rotation_) > kDriftTolerance || rotation_.determinant() < 0.0) {
      rotation_ = orthonormalized(rotation_);
    }
  }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  static SE3 from_matrix(const Eigen::Matrix4d& m) {
    return SE3(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }

  static constexpr double kDriftTolerance = 1e-12;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// World pose of a sensor at a stream timestamp.
struct Pose {
  std::int64_t timestamp_us = 0;
  SE3 transform;  // world_from_sensor
};

/// a then b reads right-to-left: the result applies b first, then a.
inline SE3 compose(const SE3& a, const SE3& b) {
  return SE3(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

inline SE3 inverse(const SE3& a) {
  Eigen::Matrix3d rt = a.rotation().transpose();
  return SE3(rt, -(rt * a.translation()));
}

/// relative(world_from_a, world_from_b) = a_from_b, i.e. inverse(wTa) * wTb.
inline SE3 relative(const SE3& world_from_a, const SE3& world_from_b) {
  return compose(inverse(world_from_a), world_from_b);
}

/// Quaternion is scalar-last (x, y, z, w); it is normalized before use but
/// must already be unit length to within 1e-3.
inline SE3 from_quaternion_translation(const Eigen::Vector4d& q_xyzw, const Eigen::Vector3d& t) {
  const double norm = q_xyzw.norm();
  if (std::abs(norm - 1.0) > 1e-3) {
    throw NonUnitQuaternion("quaternion norm " + std::to_string(norm) + " deviates from 1 by more than 1e-3");
  }
  Eigen::Quaterniond q(q_xyzw[3], q_xyzw[0], q_xyzw[1], q_xyzw[2]);
  q.normalize();
  return SE3(q.toRotationMatrix(), t);
}

/// Scalar-last (x, y, z, w), canonicalized so the first nonzero of (w,x,y,z)
/// is positive. Rules out the q/-q ambiguity in exported files.
inline Eigen::Vector4d to_quaternion(const SE3& a) {
  Eigen::Quaterniond q(a.rotation());
  Eigen::Vector4d out(q.x(), q.y(), q.z(), q.w());
  double lead = out[3];
  if (lead == 0.0) lead = out[0] != 0.0 ? out[0] : (out[1] != 0.0 ? out[1] : out[2]);
  if (lead < 0.0) out = -out;
  return out;
}

inline Eigen::Vector3d apply(const SE3& t, const Eigen::Vector3d& p) {
  return t.rotation() * p + t.translation();
}

/// Points move by R*p + t; normals rotate only. Degenerate flags pass through.
inline PointCloud apply(const SE3& t, const PointCloud& pc) {
  PointCloud out;
  out.points.reserve(pc.points.size());
  for (const auto& p : pc.points) out.points.push_back(t.rotation() * p + t.translation());
  out.normals.reserve(pc.normals.size());
  for (const auto& n : pc.normals) out.normals.push_back(t.rotation() * n);
  out.degenerate = pc.degenerate;
  return out;
}

}  // namespace fusemap
