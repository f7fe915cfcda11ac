// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0
//
// Miniature deterministic manipulation world: analytic raycast rendering of
// two camera views, kinematic grasp/lift dynamics, and a scripted expert.
// Serves as the ground-truth oracle for both views and for task success.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "handsight/image.hpp"
#include "handsight/rng.hpp"
#include "handsight/se3.hpp"

namespace handsight::world {

using Color = std::array<uint8_t, 3>;

struct Primitive {
  enum class Kind { Sphere, Box };
  Kind kind = Kind::Sphere;
  Vec3 center{0, 0, 0};
  // Spheres use half_extents[0] as the radius; boxes are axis-aligned.
  Vec3 half_extents{0, 0, 0};
  Color color{200, 200, 200};

  static Primitive sphere(const Vec3& c, double radius, Color col) {
    return {Kind::Sphere, c, {radius, radius, radius}, col};
  }
  static Primitive box(const Vec3& c, const Vec3& half, Color col) {
    return {Kind::Box, c, half, col};
  }
};

// The workspace is the box [-0.5, 0.5]^3 (meters).
constexpr double kWorkspaceHalf = 0.5;

struct Scene {
  std::vector<Primitive> objects;  // target plus distractors
  int target_id = 0;

  std::optional<Primitive> occluder;  // box between agent camera and target

  Vec3 gripper_pos{0, 0, 0.2};
  double gripper_aperture = 1.0;  // 1 open .. 0 closed
  bool render_gripper = true;

  bool has_floor = true;
  Color floor_light{205, 205, 198};
  Color floor_dark{158, 158, 152};
  Color background{232, 233, 236};

  const Primitive& target() const { return objects.at(size_t(target_id)); }
  Primitive& target() { return objects.at(size_t(target_id)); }

  // Throws std::invalid_argument when object centers leave the workspace or
  // target_id is out of range.
  void validate() const;
};

struct Intrinsics {
  double focal_px = 35.0;
  int height = 32;
  int width = 32;
};

struct CameraRig {
  Pose agent_pose;      // T_{W->AV}, fixed for the whole episode
  Pose gripper_to_ih;   // fixed wrist offset T_{gripper->IH}
  Intrinsics intrinsics;
};

struct EnvState {
  Scene scene;
  int step_index = 0;
  bool grasped = false;
  bool done = false;
  bool success = false;
};

// dx, dy, dz in meters (each clipped to +/- kMaxDelta) and a gripper command
// in [0, 1].
using Action = std::array<double, 4>;

constexpr double kMaxDelta = 0.05;
constexpr double kGraspRadius = 0.03;
constexpr double kLiftHeight = 0.2;
constexpr int kMaxSteps = 200;
constexpr double kApertureClosed = 0.5;  // below this counts as closed

struct Observation {
  ImageBuffer agent_image;
  ImageBuffer inhand_image;
  Pose av_to_ih;
  std::array<double, 4> proprio;  // gripper position + aperture
};

// Camera frame convention: +z forward, +x right, +y down (image rows).
// camera_world_pose is T_{W->cam}. Same inputs give bit-identical buffers.
ImageBuffer render(const Scene& scene, const Pose& camera_world_pose,
                   const Intrinsics& intrinsics);

Pose gripper_world_pose(const Scene& scene);

EnvState step(const EnvState& state, const Action& action);

// Proportional approach, close, lift. Succeeds within kMaxSteps from any
// generated initial state.
Action expert_policy(const EnvState& state);

Observation observe(const EnvState& state, const CameraRig& rig);

// Right-handed look-at with world up (0,0,1); image y points down.
Pose look_at_pose(const Vec3& eye, const Vec3& at);

// Scene generator parameters. The defaults realize the occlusion task:
// the occluder hides most of the target from the agent camera while the
// wrist camera looks over it.
struct WorldConfig {
  Intrinsics intrinsics;

  Vec3 av_eye{0.0, -0.45, 0.10};
  Vec3 av_look{0.0, 0.10, 0.02};

  // Wrist camera: slightly behind and above the gripper, pitched down.
  Vec3 ih_offset{0.0, -0.04, 0.06};
  Vec3 ih_look_offset{0.0, 0.06, -0.10};

  double target_radius = 0.025;
  double target_z = 0.025;
  double target_x_range = 0.14;
  double target_y_min = 0.0;
  double target_y_max = 0.10;

  double wall_y = -0.08;
  double wall_half_x = 0.30;
  double wall_half_thickness = 0.01;
  double wall_height_min = 0.044;  // randomized per episode
  double wall_height_max = 0.060;

  double gripper_start_z_min = 0.16;
  double gripper_start_z_max = 0.20;

  // Generic-mixture knobs (base model pretraining scenes).
  int generic_max_distractors = 3;
  double generic_occluder_prob = 0.5;

  std::string to_json() const;
  static WorldConfig from_json(const std::string& text);
};

CameraRig make_rig(const WorldConfig& cfg);

// Occlusion-task initial state: fixed palette, randomized target position,
// wall height, and gripper start.
EnvState make_task_state(const WorldConfig& cfg, Rng& rng);

// Randomized scene mixture for base-model pretraining: random colors, sizes,
// distractors, optional occluder, jittered cameras.
struct GenericScene {
  EnvState state;
  CameraRig rig;
};
GenericScene make_generic_scene(const WorldConfig& cfg, Rng& rng);

// Pixel counts of the target with and without the occluder, per view.
// "Occluded fraction" in the agent view = 1 - visible/unoccluded.
struct TargetVisibility {
  int av_visible = 0;
  int av_unoccluded = 0;
  int ih_visible = 0;
  int ih_unoccluded = 0;

  double av_occluded_fraction() const {
    return av_unoccluded == 0
               ? 0.0
               : 1.0 - double(av_visible) / double(av_unoccluded);
  }
  bool ih_fully_visible() const {
    return ih_unoccluded > 0 && ih_visible == ih_unoccluded;
  }
};
TargetVisibility target_visibility(const EnvState& state, const CameraRig& rig);

}  // namespace handsight::world
