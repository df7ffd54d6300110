#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <optional>
#include <vector>

#include "lssinst/core.hpp"

namespace lssinst {

/// Rigid transform: x' = R * x + t.
template <typename Scalar>
struct SE3 {
  Eigen::Matrix<Scalar, 3, 3> rotation = Eigen::Matrix<Scalar, 3, 3>::Identity();
  Eigen::Matrix<Scalar, 3, 1> translation = Eigen::Matrix<Scalar, 3, 1>::Zero();

  static SE3 identity() { return SE3{}; }

  Eigen::Matrix<Scalar, 3, 1> apply(const Eigen::Matrix<Scalar, 3, 1>& p) const {
    return rotation * p + translation;
  }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Orthonormality / det+1 check against a tolerance.
  bool is_valid(Scalar tol = Scalar(1e-9)) const {
    const Eigen::Matrix<Scalar, 3, 3> rrt = rotation * rotation.transpose();
    return (rrt - Eigen::Matrix<Scalar, 3, 3>::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - Scalar(1)) <= tol &&
           translation.allFinite();
  }
};

/// Result applies b first, then a.
template <typename Scalar>
SE3<Scalar> se3_compose(const SE3<Scalar>& a, const SE3<Scalar>& b) {
  return SE3<Scalar>{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

template <typename Scalar>
SE3<Scalar> se3_inverse(const SE3<Scalar>& a) {
  SE3<Scalar> out;
  out.rotation = a.rotation.transpose();
  out.translation = -(out.rotation * a.translation);
  return out;
}

template <typename Scalar>
SE3<Scalar> rotation_about_z(Scalar angle) {
  SE3<Scalar> out;
  out.rotation = Eigen::AngleAxis<Scalar>(angle, Eigen::Matrix<Scalar, 3, 1>::UnitZ())
                     .toRotationMatrix();
  return out;
}

template <typename Scalar>
struct CameraIntrinsics {
  Scalar fx = Scalar(1), fy = Scalar(1);
  Scalar cx = Scalar(0), cy = Scalar(0);
  int image_width = 0;
  int image_height = 0;
};

/// Pinhole camera attached to the ego frame; extrinsics map ego -> camera.
template <typename Scalar>
struct CameraModel {
  CameraIntrinsics<Scalar> intrinsics;
  SE3<Scalar> extrinsics;
  int view_id = 0;
};

template <typename Scalar>
struct EgoPose {
  SE3<Scalar> ego_to_world;
  Scalar timestamp = Scalar(0);
};

template <typename Scalar>
struct PixelDepth {
  Scalar u, v;
  Scalar depth;  // camera-frame z, meters
};

inline constexpr double kDepthEpsilon = 1e-6;

/// Projects an ego-frame point into the image plane. Empty when the point is
/// at or behind the camera (depth <= depth_epsilon); the caller must mask the
/// view in that case.
template <typename Scalar>
std::optional<PixelDepth<Scalar>> project_point(const CameraModel<Scalar>& cam,
                                                const Eigen::Matrix<Scalar, 3, 1>& point_ego,
                                                Scalar depth_epsilon = Scalar(kDepthEpsilon)) {
  const Eigen::Matrix<Scalar, 3, 1> pc = cam.extrinsics.apply(point_ego);
  if (!(pc.z() > depth_epsilon)) return std::nullopt;
  const auto& k = cam.intrinsics;
  return PixelDepth<Scalar>{k.fx * pc.x() / pc.z() + k.cx,
                            k.fy * pc.y() / pc.z() + k.cy, pc.z()};
}

/// Inverse of project_point at a given camera depth; returns ego coordinates.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> unproject_pixel(const CameraModel<Scalar>& cam, Scalar u, Scalar v,
                                            Scalar depth) {
  if (!(depth > Scalar(0))) throw NonPositiveDepth("unproject_pixel: depth must be > 0");
  const auto& k = cam.intrinsics;
  const Eigen::Matrix<Scalar, 3, 1> pc((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth,
                                       depth);
  return se3_inverse(cam.extrinsics).apply(pc);
}

/// M_t mapping current-ego coordinates into the target frame's ego
/// coordinates: inverse(target.ego_to_world) ∘ current.ego_to_world.
template <typename Scalar>
SE3<Scalar> temporal_transform(const EgoPose<Scalar>& pose_current,
                               const EgoPose<Scalar>& pose_target) {
  return se3_compose(se3_inverse(pose_target.ego_to_world), pose_current.ego_to_world);
}

/// Constant-velocity compensation followed by the ego warp: applies m_t to
/// (p_pos - tau*t*(vx, vy, 0)). Frame index t counts backwards in time.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> compensate_and_warp(const Eigen::Matrix<Scalar, 3, 1>& p_pos,
                                                const Eigen::Matrix<Scalar, 2, 1>& p_vel, int t,
                                                Scalar tau, const SE3<Scalar>& m_t) {
  Eigen::Matrix<Scalar, 3, 1> shifted = p_pos;
  shifted.x() -= tau * Scalar(t) * p_vel.x();
  shifted.y() -= tau * Scalar(t) * p_vel.y();
  return m_t.apply(shifted);
}

using SE3d = SE3<double>;
using CameraIntrinsicsd = CameraIntrinsics<double>;
using CameraModeld = CameraModel<double>;
using EgoPosed = EgoPose<double>;

}  // namespace lssinst
