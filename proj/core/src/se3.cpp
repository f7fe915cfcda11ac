// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/se3.hpp"

#include <json.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "handsight/wire.hpp"

namespace handsight {

namespace {

constexpr double kDriftTolerance = 1e-9;
constexpr double kSmallAngle = 1e-12;

Vec3 row(const Mat3& m, int i) { return {m[3 * i], m[3 * i + 1], m[3 * i + 2]}; }

void set_row(Mat3& m, int i, const Vec3& v) {
  m[3 * i] = v[0];
  m[3 * i + 1] = v[1];
  m[3 * i + 2] = v[2];
}

// Modified Gram-Schmidt on the rows.
Mat3 orthonormalize(const Mat3& m) {
  Vec3 r0 = normalized(row(m, 0));
  Vec3 r1 = row(m, 1) - dot(row(m, 1), r0) * r0;
  r1 = normalized(r1);
  Vec3 r2 = cross(r0, r1);
  Mat3 out;
  set_row(out, 0, r0);
  set_row(out, 1, r1);
  set_row(out, 2, r2);
  return out;
}

double drift_of(const Mat3& r) {
  Mat3 g = mat_mul(mat_transpose(r), r);
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(g[3 * i + j] - want));
    }
  worst = std::max(worst, std::abs(mat_det(r) - 1.0));
  return worst;
}

}  // namespace

Mat3 mat_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[3 * i + k] * b[3 * k + j];
      c[3 * i + j] = s;
    }
  return c;
}

Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
          m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Mat3 mat_transpose(const Mat3& m) {
  return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
}

double mat_det(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 rotation_about(const Vec3& w) {
  double theta = norm(w);
  Mat3 k{0, -w[2], w[1], w[2], 0, -w[0], -w[1], w[0], 0};
  Mat3 k2 = mat_mul(k, k);
  double c1, c2;
  if (theta < kSmallAngle) {
    c1 = 1.0;
    c2 = 0.5;
  } else {
    c1 = std::sin(theta) / theta;
    c2 = (1.0 - std::cos(theta)) / (theta * theta);
  }
  Mat3 r = mat_identity();
  for (int i = 0; i < 9; ++i) r[i] += c1 * k[i] + c2 * k2[i];
  return r;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (mat_det(rotation_) <= 0.0)
    throw std::invalid_argument("Pose: rotation has non-positive determinant");
  if (drift_of(rotation_) > kDriftTolerance) {
    rotation_ = orthonormalize(rotation_);
    if (drift_of(rotation_) > kDriftTolerance)
      throw std::invalid_argument("Pose: rotation not repairable");
  }
  for (double v : translation_)
    if (!std::isfinite(v))
      throw std::invalid_argument("Pose: non-finite translation");
}

Pose Pose::from_axis_angle(const Vec3& axis_angle, const Vec3& translation) {
  return Pose(rotation_about(axis_angle), translation);
}

Vec3 Pose::apply(const Vec3& point) const {
  return mat_vec(rotation_, point) + translation_;
}

double Pose::orthonormal_drift() const { return drift_of(rotation_); }

bool Pose::approx_equal(const Pose& other, double tol) const {
  for (int i = 0; i < 9; ++i)
    if (std::abs(rotation_[i] - other.rotation_[i]) > tol) return false;
  for (int i = 0; i < 3; ++i)
    if (std::abs(translation_[i] - other.translation_[i]) > tol) return false;
  return true;
}

void Pose::write(std::ostream& os) const {
  for (double v : rotation_) wire::put_f64(os, v);
  for (double v : translation_) wire::put_f64(os, v);
}

Pose Pose::read(std::istream& is) {
  Mat3 r;
  Vec3 t;
  for (double& v : r) v = wire::get_f64(is);
  for (double& v : t) v = wire::get_f64(is);
  return Pose(r, t);
}

std::string Pose::to_json() const {
  nlohmann::json j;
  j["R"] = {{rotation_[0], rotation_[1], rotation_[2]},
            {rotation_[3], rotation_[4], rotation_[5]},
            {rotation_[6], rotation_[7], rotation_[8]}};
  j["t"] = {translation_[0], translation_[1], translation_[2]};
  return j.dump();
}

Pose Pose::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[3 * i + k] = j.at("R").at(i).at(k).get<double>();
  Vec3 t;
  for (int i = 0; i < 3; ++i) t[i] = j.at("t").at(i).get<double>();
  return Pose(r, t);
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(mat_mul(a.rotation(), b.rotation()),
              mat_vec(a.rotation(), b.translation()) + a.translation());
}

Pose inverse(const Pose& p) {
  Mat3 rt = mat_transpose(p.rotation());
  return Pose(rt, -mat_vec(rt, p.translation()));
}

Pose recover_agent_camera(const Pose& t0_gripper, const Pose& gripper_to_ih,
                          const Pose& t0_av_to_ih) {
  return compose(compose(t0_gripper, gripper_to_ih), inverse(t0_av_to_ih));
}

Pose relative_pose_at(const Pose& world_to_av, const Pose& gripper_t,
                      const Pose& gripper_to_ih) {
  return compose(compose(inverse(world_to_av), gripper_t), gripper_to_ih);
}

PoseEncoding encode_pose(const Pose& p) {
  const Mat3& r = p.rotation();
  double trace = r[0] + r[4] + r[8];
  double cos_theta = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  double theta = std::acos(cos_theta);

  Vec3 w{};
  if (theta < 1e-9) {
    // First order: vee((R - R^T)/2).
    w = {0.5 * (r[7] - r[5]), 0.5 * (r[2] - r[6]), 0.5 * (r[3] - r[1])};
  } else if (theta > M_PI - 1e-6) {
    // Near pi the antisymmetric part vanishes; read the axis from the
    // symmetric part B = (R + I)/2, axis_i^2 = B_ii, signs from the largest
    // pivot's off-diagonal entries. The angle itself comes from asin of the
    // antisymmetric magnitude, which stays well-conditioned where acos of
    // the trace does not.
    {
      Vec3 antisym = {r[7] - r[5], r[2] - r[6], r[3] - r[1]};
      double sin_theta = std::clamp(0.5 * norm(antisym), 0.0, 1.0);
      theta = M_PI - std::asin(sin_theta);
    }
    double bxx = (r[0] + 1.0) / 2.0, byy = (r[4] + 1.0) / 2.0,
           bzz = (r[8] + 1.0) / 2.0;
    Vec3 axis;
    if (bxx >= byy && bxx >= bzz) {
      double x = std::sqrt(std::max(bxx, 0.0));
      axis = {x, (r[1] + r[3]) / (4.0 * x), (r[2] + r[6]) / (4.0 * x)};
    } else if (byy >= bzz) {
      double y = std::sqrt(std::max(byy, 0.0));
      axis = {(r[1] + r[3]) / (4.0 * y), y, (r[5] + r[7]) / (4.0 * y)};
    } else {
      double z = std::sqrt(std::max(bzz, 0.0));
      axis = {(r[2] + r[6]) / (4.0 * z), (r[5] + r[7]) / (4.0 * z), z};
    }
    axis = normalized(axis);
    // Unique representative: first component with magnitude above tolerance
    // is made positive (at exactly pi, +axis and -axis are the same rotation).
    Vec3 sym = {r[7] - r[5], r[2] - r[6], r[3] - r[1]};
    double sym_dot = dot(sym, axis);
    if (std::abs(sym_dot) > 1e-12) {
      if (sym_dot < 0.0) axis = -axis;
    } else {
      for (int i = 0; i < 3; ++i) {
        if (std::abs(axis[i]) > 1e-9) {
          if (axis[i] < 0.0) axis = -axis;
          break;
        }
      }
    }
    w = theta * axis;
  } else {
    double scale = theta / (2.0 * std::sin(theta));
    w = scale * Vec3{r[7] - r[5], r[2] - r[6], r[3] - r[1]};
  }

  PoseEncoding enc;
  const Vec3& t = p.translation();
  enc.v = {t[0], t[1], t[2], w[0], w[1], w[2]};
  return enc;
}

}  // namespace handsight
