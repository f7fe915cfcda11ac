// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0
//
// Rigid-body transforms on SE(3) and the hand-eye calibration chain relating
// a fixed external camera, the gripper, and a wrist-mounted camera.

#pragma once

#include <array>
#include <cmath>
#include <iosfwd>
#include <string>

namespace handsight {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& v) {
  return {s * v[0], s * v[1], s * v[2]};
}
inline Vec3 operator-(const Vec3& v) { return {-v[0], -v[1], -v[2]}; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  return {v[0] / n, v[1] / n, v[2] / n};
}

Mat3 mat_identity();
Mat3 mat_mul(const Mat3& a, const Mat3& b);
Vec3 mat_vec(const Mat3& m, const Vec3& v);
Mat3 mat_transpose(const Mat3& m);
double mat_det(const Mat3& m);

// Rodrigues exponential: axis-angle vector -> rotation matrix.
Mat3 rotation_about(const Vec3& axis_angle);

// Rigid transform. T_{A->B} maps coordinates expressed in frame B into frame
// A, i.e. it is the pose of frame B seen from frame A. Rotation is kept as an
// orthonormal matrix; construction re-projects noisy inputs and rejects
// anything that is not a proper rotation.
class Pose {
 public:
  Pose() : rotation_(mat_identity()), translation_{0.0, 0.0, 0.0} {}

  // Throws std::invalid_argument if R cannot be repaired into a proper
  // rotation (det must be positive, drift re-projected via Gram-Schmidt).
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }
  static Pose from_axis_angle(const Vec3& axis_angle, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& point) const;

  // Max deviation of R^T R from identity plus |det - 1|.
  double orthonormal_drift() const;

  bool approx_equal(const Pose& other, double tol) const;

  // 12 little-endian f64: row-major rotation then translation.
  void write(std::ostream& os) const;
  static Pose read(std::istream& is);

  std::string to_json() const;
  static Pose from_json(const std::string& text);

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

// Hand-eye chain. Frames: W world, AV fixed external camera, IH wrist camera.
//
// Recovers the fixed external camera pose from the initial-frame measurements:
//   T_{W->AV} = T_{W->gripper}(t0) * T_{gripper->IH} * inverse(T_{AV->IH}(t0))
Pose recover_agent_camera(const Pose& t0_gripper, const Pose& gripper_to_ih,
                          const Pose& t0_av_to_ih);

// Time-varying calibrated relative pose:
//   T_{AV->IH}(t) = inverse(T_{W->AV}) * T_{W->gripper}(t) * T_{gripper->IH}
Pose relative_pose_at(const Pose& world_to_av, const Pose& gripper_t,
                      const Pose& gripper_to_ih);

// 6-vector fed to the pose-conditioning MLP: translation (m) then axis-angle
// (rad). Identity encodes to zero; the angle magnitude is kept in [0, pi]
// with the axis flipped as needed so the encoding is unique.
struct PoseEncoding {
  std::array<double, 6> v{};

  Vec3 translation() const { return {v[0], v[1], v[2]}; }
  Vec3 axis_angle() const { return {v[3], v[4], v[5]}; }
  double angle() const { return norm(axis_angle()); }
};

PoseEncoding encode_pose(const Pose& p);

}  // namespace handsight
