// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/se3.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>

#include "handsight/rng.hpp"

using namespace handsight;

namespace {

using Mat4 = std::array<double, 16>;

Mat4 to_homogeneous(const Pose& p) {
  const Mat3& r = p.rotation();
  const Vec3& t = p.translation();
  return {r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1],
          r[6], r[7], r[8], t[2], 0,    0,    0,    1};
}

Mat4 mat4_mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a[4 * i + k] * b[4 * k + j];
      c[4 * i + j] = s;
    }
  return c;
}

// Gauss-Jordan with partial pivoting; general-purpose, no SE(3) shortcuts.
Mat4 mat4_inverse(Mat4 a) {
  Mat4 inv{};
  for (int i = 0; i < 4; ++i) inv[4 * i + i] = 1.0;
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 4; ++row)
      if (std::abs(a[4 * row + col]) > std::abs(a[4 * pivot + col])) pivot = row;
    for (int j = 0; j < 4; ++j) {
      std::swap(a[4 * col + j], a[4 * pivot + j]);
      std::swap(inv[4 * col + j], inv[4 * pivot + j]);
    }
    double d = a[4 * col + col];
    for (int j = 0; j < 4; ++j) {
      a[4 * col + j] /= d;
      inv[4 * col + j] /= d;
    }
    for (int row = 0; row < 4; ++row) {
      if (row == col) continue;
      double f = a[4 * row + col];
      for (int j = 0; j < 4; ++j) {
        a[4 * row + j] -= f * a[4 * col + j];
        inv[4 * row + j] -= f * inv[4 * col + j];
      }
    }
  }
  return inv;
}

double max_abs_diff(const Mat4& a, const Mat4& b) {
  double m = 0;
  for (int i = 0; i < 16; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Pose random_pose(Rng& rng, double max_angle = M_PI * 0.98) {
  Vec3 axis = normalized({rng.normal(), rng.normal(), rng.normal()});
  double angle = rng.uniform(0.0, max_angle);
  Vec3 t{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return Pose::from_axis_angle(angle * axis, t);
}

// Decode oracle via quaternions, independent of the Rodrigues path used by
// the library.
Mat3 quat_rotation(const Vec3& axis_angle) {
  double angle = norm(axis_angle);
  double w = std::cos(angle / 2.0);
  Vec3 xyz = {0, 0, 0};
  if (angle > 1e-300) xyz = std::sin(angle / 2.0) * normalized(axis_angle);
  double x = xyz[0], y = xyz[1], z = xyz[2];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
}

Pose decode_oracle(const PoseEncoding& e) {
  return Pose(quat_rotation(e.axis_angle()), e.translation());
}

}  // namespace

TEST_CASE("compose identities") {
  Rng rng(1);
  Pose p = random_pose(rng);
  CHECK(compose(Pose::identity(), p).approx_equal(p, 1e-15));
  CHECK(compose(p, inverse(p)).approx_equal(Pose::identity(), 1e-9));
}

TEST_CASE("compose matches homogeneous-matrix oracle") {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng);
    Mat4 want = mat4_mul(to_homogeneous(a), to_homogeneous(b));
    CHECK(max_abs_diff(to_homogeneous(compose(a, b)), want) < 1e-12);
  }
}

TEST_CASE("inverse") {
  CHECK(inverse(Pose::identity()).approx_equal(Pose::identity(), 0.0));
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Pose p = random_pose(rng);
    CHECK(inverse(inverse(p)).approx_equal(p, 1e-12));
    Mat4 want = mat4_inverse(to_homogeneous(p));
    CHECK(max_abs_diff(to_homogeneous(inverse(p)), want) < 1e-10);
  }
}

TEST_CASE("associativity of compose") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(compose(compose(a, b), c).approx_equal(compose(a, compose(b, c)), 1e-10));
  }
}

TEST_CASE("recover_agent_camera on identity inputs") {
  Pose id;
  CHECK(recover_agent_camera(id, id, id).approx_equal(id, 0.0));
}

TEST_CASE("hand-eye chain recovers ground-truth camera pose") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Pose world_to_av_gt = random_pose(rng);
    Pose t0_gripper = random_pose(rng);
    Pose gripper_to_ih = random_pose(rng);
    Pose t0_av_to_ih = relative_pose_at(world_to_av_gt, t0_gripper, gripper_to_ih);

    Pose recovered = recover_agent_camera(t0_gripper, gripper_to_ih, t0_av_to_ih);
    CHECK(recovered.approx_equal(world_to_av_gt, 1e-9));

    // Substituting back reproduces the measured relative pose.
    Pose rel = relative_pose_at(recovered, t0_gripper, gripper_to_ih);
    CHECK(rel.approx_equal(t0_av_to_ih, 1e-9));
  }
}

TEST_CASE("relative_pose_at cancellation and oracle") {
  Rng rng(6);
  Pose gripper_t = random_pose(rng), gripper_to_ih = random_pose(rng);
  Pose world_to_av = compose(gripper_t, gripper_to_ih);
  CHECK(relative_pose_at(world_to_av, gripper_t, gripper_to_ih)
            .approx_equal(Pose::identity(), 1e-12));

  for (int i = 0; i < 100; ++i) {
    Pose av = random_pose(rng), g = random_pose(rng), gih = random_pose(rng);
    Pose ih_world = compose(g, gih);
    Pose want = compose(inverse(av), ih_world);  // two-camera oracle
    CHECK(relative_pose_at(av, g, gih).approx_equal(want, 1e-10));
  }
}

TEST_CASE("relative_pose_at on pure translations") {
  Pose av(mat_identity(), {0.2, -0.1, 0.4});
  Pose g(mat_identity(), {0.5, 0.3, 0.1});
  Pose gih(mat_identity(), {0.0, 0.05, -0.02});
  Pose rel = relative_pose_at(av, g, gih);
  Vec3 want = (g.translation() + gih.translation()) - av.translation();
  CHECK(norm(rel.translation() - want) < 1e-12);
  CHECK(rel.approx_equal(Pose(mat_identity(), want), 1e-12));
}

TEST_CASE("point mapping equivalence") {
  Rng rng(7);
  Pose av = random_pose(rng), g = random_pose(rng), gih = random_pose(rng);
  Pose rel = relative_pose_at(av, g, gih);
  Pose ih_world = compose(g, gih);
  for (int i = 0; i < 100; ++i) {
    Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec3 via_rel = rel.apply(p);
    Vec3 via_world = inverse(av).apply(ih_world.apply(p));
    CHECK(norm(via_rel - via_world) < 1e-9);
  }
}

TEST_CASE("pose encoding basics") {
  PoseEncoding zero = encode_pose(Pose::identity());
  for (double v : zero.v) CHECK(v == 0.0);

  Pose rz = Pose::from_axis_angle({0, 0, M_PI / 2}, {0, 0, 0});
  PoseEncoding enc = encode_pose(rz);
  CHECK(enc.v[0] == doctest::Approx(0.0));
  CHECK(enc.v[1] == doctest::Approx(0.0));
  CHECK(enc.v[2] == doctest::Approx(0.0));
  CHECK(enc.v[3] == doctest::Approx(0.0));
  CHECK(enc.v[4] == doctest::Approx(0.0));
  CHECK(enc.v[5] == doctest::Approx(M_PI / 2).epsilon(1e-12));
}

TEST_CASE("pose encoding round-trips through quaternion decode oracle") {
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    Pose p = random_pose(rng);
    PoseEncoding e = encode_pose(p);
    CHECK(e.angle() <= M_PI + 1e-12);
    CHECK(decode_oracle(e).approx_equal(p, 1e-9));
  }
}

TEST_CASE("pose encoding near and at pi") {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    Vec3 axis = normalized({rng.normal(), rng.normal(), rng.normal()});
    for (double angle : {M_PI - 1e-7, M_PI}) {
      Pose p = Pose::from_axis_angle(angle * axis, {0.1, 0.2, 0.3});
      PoseEncoding e = encode_pose(p);
      CHECK(e.angle() <= M_PI + 1e-12);
      CHECK(decode_oracle(e).approx_equal(p, 1e-8));
    }
  }
}

TEST_CASE("constructor re-projects drifted rotations and rejects garbage") {
  Rng rng(10);
  Pose p = random_pose(rng);
  Mat3 noisy = p.rotation();
  for (auto& v : noisy) v += rng.uniform(-1e-6, 1e-6);
  Pose repaired(noisy, p.translation());
  CHECK(repaired.orthonormal_drift() < 1e-9);
  CHECK(repaired.approx_equal(p, 1e-5));

  Mat3 reflection = mat_identity();
  reflection[0] = -1.0;  // det = -1
  CHECK_THROWS_AS(Pose(reflection, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("pose serialization round-trips bit-exactly") {
  Rng rng(11);
  Pose p = random_pose(rng);
  std::stringstream ss;
  p.write(ss);
  CHECK(ss.str().size() == 12 * 8);
  Pose q = Pose::read(ss);
  CHECK(p.approx_equal(q, 0.0));

  Pose j = Pose::from_json(p.to_json());
  CHECK(p.approx_equal(j, 1e-12));
}
