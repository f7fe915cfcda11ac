// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/toyworld.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "handsight/log.hpp"

namespace handsight::world {

namespace {

constexpr double kRayEps = 1e-9;
constexpr double kFloorCell = 0.08;
constexpr double kGraspAttachDz = 0.012;  // gripper center sits above target

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Color color{};
  bool valid = false;
};

void consider(Hit& best, double t, Color color) {
  if (t > kRayEps && t < best.t) {
    best.t = t;
    best.color = color;
    best.valid = true;
  }
}

void intersect_sphere(const Vec3& o, const Vec3& d, const Primitive& p, Hit& best) {
  Vec3 oc = o - p.center;
  double r = p.half_extents[0];
  double b = dot(oc, d);
  double c = dot(oc, oc) - r * r;
  double disc = b * b - c;
  if (disc < 0) return;
  double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= kRayEps) t = -b + s;
  consider(best, t, p.color);
}

void intersect_box(const Vec3& o, const Vec3& d, const Primitive& p, Hit& best) {
  double tnear = -std::numeric_limits<double>::infinity();
  double tfar = std::numeric_limits<double>::infinity();
  for (int ax = 0; ax < 3; ++ax) {
    double lo = p.center[size_t(ax)] - p.half_extents[size_t(ax)];
    double hi = p.center[size_t(ax)] + p.half_extents[size_t(ax)];
    if (std::abs(d[size_t(ax)]) < 1e-12) {
      if (o[size_t(ax)] < lo || o[size_t(ax)] > hi) return;
      continue;
    }
    double t1 = (lo - o[size_t(ax)]) / d[size_t(ax)];
    double t2 = (hi - o[size_t(ax)]) / d[size_t(ax)];
    if (t1 > t2) std::swap(t1, t2);
    tnear = std::max(tnear, t1);
    tfar = std::min(tfar, t2);
    if (tnear > tfar) return;
  }
  if (tfar <= kRayEps) return;
  consider(best, tnear > kRayEps ? tnear : tfar, p.color);
}

void intersect_primitive(const Vec3& o, const Vec3& d, const Primitive& p,
                         Hit& best) {
  if (p.kind == Primitive::Kind::Sphere)
    intersect_sphere(o, d, p, best);
  else
    intersect_box(o, d, p, best);
}

void intersect_floor(const Vec3& o, const Vec3& d, const Scene& scene, Hit& best) {
  if (std::abs(d[2]) < 1e-12) return;
  double t = -o[2] / d[2];
  if (t <= kRayEps) return;
  double x = o[0] + t * d[0];
  double y = o[1] + t * d[1];
  if (std::abs(x) > kWorkspaceHalf || std::abs(y) > kWorkspaceHalf) return;
  long cx = long(std::floor(x / kFloorCell));
  long cy = long(std::floor(y / kFloorCell));
  consider(best, t, ((cx + cy) & 1) ? scene.floor_dark : scene.floor_light);
}

std::vector<Primitive> gripper_fingers(const Scene& scene) {
  double offset = 0.006 + 0.014 * scene.gripper_aperture;
  const Vec3& g = scene.gripper_pos;
  Color finger{45, 45, 48};
  Color palm{72, 72, 78};
  return {
      Primitive::box(g + Vec3{offset, 0, 0}, {0.004, 0.004, 0.015}, finger),
      Primitive::box(g + Vec3{-offset, 0, 0}, {0.004, 0.004, 0.015}, finger),
      Primitive::box(g + Vec3{0, 0, 0.018}, {0.024, 0.005, 0.004}, palm),
  };
}

std::atomic<int> g_clip_warnings{0};

double clip_component(double v, double lo, double hi) {
  double c = std::clamp(v, lo, hi);
  if (c != v && g_clip_warnings.fetch_add(1) < 3)
    log::warn("action_clipped", {{"value", v}, {"lo", lo}, {"hi", hi}});
  return c;
}

}  // namespace

void Scene::validate() const {
  if (objects.empty() || target_id < 0 || target_id >= int(objects.size()))
    throw std::invalid_argument("Scene: target_id out of range");
  for (const auto& obj : objects)
    for (double v : obj.center)
      if (std::abs(v) > kWorkspaceHalf)
        throw std::invalid_argument("Scene: object outside workspace");
  if (occluder)
    for (double v : occluder->center)
      if (std::abs(v) > kWorkspaceHalf)
        throw std::invalid_argument("Scene: occluder outside workspace");
}

ImageBuffer render(const Scene& scene, const Pose& camera_world_pose,
                   const Intrinsics& intr) {
  ImageBuffer img(intr.height, intr.width);
  const Vec3 origin = camera_world_pose.translation();
  const Mat3& rot = camera_world_pose.rotation();
  const double cx = intr.width / 2.0;
  const double cy = intr.height / 2.0;

  std::vector<Primitive> extra;
  if (scene.render_gripper) extra = gripper_fingers(scene);

  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      Vec3 dir_cam{(x + 0.5 - cx) / intr.focal_px, (y + 0.5 - cy) / intr.focal_px,
                   1.0};
      Vec3 dir = normalized(mat_vec(rot, dir_cam));

      Hit best;
      for (const auto& p : scene.objects) intersect_primitive(origin, dir, p, best);
      if (scene.occluder) intersect_primitive(origin, dir, *scene.occluder, best);
      for (const auto& p : extra) intersect_primitive(origin, dir, p, best);
      if (scene.has_floor) intersect_floor(origin, dir, scene, best);

      Color c = best.valid ? best.color : scene.background;
      uint8_t* px = img.pixel(y, x);
      px[0] = c[0];
      px[1] = c[1];
      px[2] = c[2];
    }
  return img;
}

Pose gripper_world_pose(const Scene& scene) {
  return Pose(mat_identity(), scene.gripper_pos);
}

EnvState step(const EnvState& state, const Action& action) {
  EnvState next = state;
  if (next.done) return next;

  Action a;
  for (int i = 0; i < 3; ++i)
    a[size_t(i)] = clip_component(action[size_t(i)], -kMaxDelta, kMaxDelta);
  a[3] = clip_component(action[3], 0.0, 1.0);

  Vec3& g = next.scene.gripper_pos;
  g = g + Vec3{a[0], a[1], a[2]};
  for (double& v : g) v = std::clamp(v, -kWorkspaceHalf, kWorkspaceHalf);
  next.scene.gripper_aperture = a[3];

  Primitive& target = next.scene.target();
  bool closed = next.scene.gripper_aperture < kApertureClosed;
  if (next.grasped && !closed) {
    next.grasped = false;  // released: drop to the floor
    target.center[2] = target.half_extents[2];
  } else if (!next.grasped && closed &&
             norm(g - target.center) < kGraspRadius) {
    next.grasped = true;
  }
  if (next.grasped) target.center = g - Vec3{0, 0, kGraspAttachDz};

  if (next.grasped && target.center[2] > kLiftHeight) {
    next.success = true;
    next.done = true;
  }
  ++next.step_index;
  if (next.step_index >= kMaxSteps) next.done = true;
  return next;
}

Action expert_policy(const EnvState& state) {
  const Scene& s = state.scene;
  if (state.done) return {0, 0, 0, s.gripper_aperture};
  if (state.grasped) return {0, 0, kMaxDelta, 0.0};

  Vec3 grasp_point = s.target().center + Vec3{0, 0, kGraspAttachDz};
  Vec3 d = grasp_point - s.gripper_pos;
  double dxy = std::hypot(d[0], d[1]);

  auto clamped = [](double v) { return std::clamp(v, -kMaxDelta, kMaxDelta); };
  if (dxy > 0.012) {
    // Align above the target at hover height first.
    double hover_z = std::max(grasp_point[2] + 0.06, 0.12);
    return {clamped(d[0]), clamped(d[1]), clamped(hover_z - s.gripper_pos[2]), 1.0};
  }
  if (std::abs(d[2]) > 0.006)
    return {clamped(d[0]), clamped(d[1]), clamped(d[2]), 1.0};
  return {0, 0, 0, 0.0};  // in position: close
}

Observation observe(const EnvState& state, const CameraRig& rig) {
  Observation obs;
  Pose gripper = gripper_world_pose(state.scene);
  Pose ih_world = compose(gripper, rig.gripper_to_ih);
  obs.agent_image = render(state.scene, rig.agent_pose, rig.intrinsics);
  obs.inhand_image = render(state.scene, ih_world, rig.intrinsics);
  obs.av_to_ih = relative_pose_at(rig.agent_pose, gripper, rig.gripper_to_ih);
  obs.proprio = {state.scene.gripper_pos[0], state.scene.gripper_pos[1],
                 state.scene.gripper_pos[2], state.scene.gripper_aperture};
  return obs;
}

Pose look_at_pose(const Vec3& eye, const Vec3& at) {
  Vec3 forward = normalized(at - eye);
  Vec3 up{0, 0, 1};
  Vec3 right = cross(forward, up);
  if (norm(right) < 1e-6) {
    up = {0, 1, 0};
    right = cross(forward, up);
  }
  right = normalized(right);
  Vec3 down = cross(forward, right);
  Mat3 r{right[0], down[0], forward[0],  //
         right[1], down[1], forward[1],  //
         right[2], down[2], forward[2]};
  return Pose(r, eye);
}

CameraRig make_rig(const WorldConfig& cfg) {
  CameraRig rig;
  rig.intrinsics = cfg.intrinsics;
  rig.agent_pose = look_at_pose(cfg.av_eye, cfg.av_look);
  rig.gripper_to_ih = look_at_pose(cfg.ih_offset, cfg.ih_offset + cfg.ih_look_offset);
  return rig;
}

EnvState make_task_state(const WorldConfig& cfg, Rng& rng) {
  EnvState state;
  Scene& scene = state.scene;

  double tx = rng.uniform(-cfg.target_x_range, cfg.target_x_range);
  double ty = rng.uniform(cfg.target_y_min, cfg.target_y_max);
  scene.objects.push_back(Primitive::sphere({tx, ty, cfg.target_z},
                                            cfg.target_radius, {220, 50, 40}));
  scene.target_id = 0;

  double wall_h = rng.uniform(cfg.wall_height_min, cfg.wall_height_max);
  scene.occluder = Primitive::box(
      {0.0, cfg.wall_y, wall_h / 2.0},
      {cfg.wall_half_x, cfg.wall_half_thickness, wall_h / 2.0}, {95, 105, 125});

  scene.gripper_pos = {rng.uniform(-0.05, 0.05), rng.uniform(0.02, 0.08),
                       rng.uniform(cfg.gripper_start_z_min, cfg.gripper_start_z_max)};
  scene.gripper_aperture = 1.0;
  scene.validate();
  return state;
}

GenericScene make_generic_scene(const WorldConfig& cfg, Rng& rng) {
  GenericScene out;
  Scene& scene = out.state.scene;

  auto rand_color = [&rng] {
    return Color{uint8_t(rng.uniform_int(30, 230)), uint8_t(rng.uniform_int(30, 230)),
                 uint8_t(rng.uniform_int(30, 230))};
  };

  int n_objects = 1 + int(rng.uniform_int(0, cfg.generic_max_distractors));
  for (int i = 0; i < n_objects; ++i) {
    double x = rng.uniform(-0.3, 0.3);
    double y = rng.uniform(-0.3, 0.3);
    if (rng.uniform() < 0.5) {
      double r = rng.uniform(0.01, 0.03);
      scene.objects.push_back(Primitive::sphere({x, y, r}, r, rand_color()));
    } else {
      Vec3 half{rng.uniform(0.01, 0.04), rng.uniform(0.01, 0.04),
                rng.uniform(0.01, 0.04)};
      scene.objects.push_back(Primitive::box({x, y, half[2]}, half, rand_color()));
    }
  }
  scene.target_id = int(rng.uniform_int(0, n_objects - 1));

  if (rng.uniform() < cfg.generic_occluder_prob) {
    double wy = rng.uniform(-0.15, -0.02);
    double h = rng.uniform(0.03, 0.10);
    double hx = rng.uniform(0.10, 0.35);
    scene.occluder = Primitive::box({rng.uniform(-0.1, 0.1), wy, h / 2.0},
                                    {hx, cfg.wall_half_thickness, h / 2.0},
                                    rand_color());
  }

  auto jitter8 = [&rng](uint8_t base) {
    return uint8_t(std::clamp(int(base) + int(rng.uniform_int(-20, 20)), 0, 255));
  };
  scene.floor_light = {jitter8(205), jitter8(205), jitter8(198)};
  scene.floor_dark = {jitter8(158), jitter8(158), jitter8(152)};
  scene.background = {jitter8(232), jitter8(233), jitter8(236)};

  scene.gripper_pos = {rng.uniform(-0.2, 0.2), rng.uniform(-0.1, 0.2),
                       rng.uniform(0.12, 0.25)};
  scene.gripper_aperture = 1.0;
  scene.validate();

  out.rig.intrinsics = cfg.intrinsics;
  Vec3 eye = cfg.av_eye + Vec3{rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06),
                               rng.uniform(-0.06, 0.06)};
  Vec3 look = cfg.av_look + Vec3{rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                                 rng.uniform(-0.04, 0.04)};
  out.rig.agent_pose = look_at_pose(eye, look);
  out.rig.gripper_to_ih =
      look_at_pose(cfg.ih_offset, cfg.ih_offset + cfg.ih_look_offset);
  return out;
}

TargetVisibility target_visibility(const EnvState& state, const CameraRig& rig) {
  auto count_diff = [](const ImageBuffer& a, const ImageBuffer& b) {
    int n = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const uint8_t* pa = a.pixel(y, x);
        const uint8_t* pb = b.pixel(y, x);
        if (pa[0] != pb[0] || pa[1] != pb[1] || pa[2] != pb[2]) ++n;
      }
    return n;
  };

  Scene with_target = state.scene;
  Scene sans_target = state.scene;
  sans_target.objects.erase(sans_target.objects.begin() + state.scene.target_id);
  sans_target.target_id = 0;
  if (sans_target.objects.empty()) {
    sans_target.objects.push_back(
        Primitive::sphere({0.45, 0.45, -10.0}, 1e-6, {0, 0, 0}));
  }

  Scene with_target_noocc = with_target;
  with_target_noocc.occluder.reset();
  Scene sans_target_noocc = sans_target;
  sans_target_noocc.occluder.reset();

  Pose gripper = gripper_world_pose(state.scene);
  Pose ih_world = compose(gripper, rig.gripper_to_ih);

  TargetVisibility v;
  v.av_visible = count_diff(render(with_target, rig.agent_pose, rig.intrinsics),
                            render(sans_target, rig.agent_pose, rig.intrinsics));
  v.av_unoccluded =
      count_diff(render(with_target_noocc, rig.agent_pose, rig.intrinsics),
                 render(sans_target_noocc, rig.agent_pose, rig.intrinsics));
  v.ih_visible = count_diff(render(with_target, ih_world, rig.intrinsics),
                            render(sans_target, ih_world, rig.intrinsics));
  v.ih_unoccluded = count_diff(render(with_target_noocc, ih_world, rig.intrinsics),
                               render(sans_target_noocc, ih_world, rig.intrinsics));
  return v;
}

std::string WorldConfig::to_json() const {
  nlohmann::json j;
  j["image_size"] = intrinsics.height;
  j["focal_px"] = intrinsics.focal_px;
  j["av_eye"] = av_eye;
  j["av_look"] = av_look;
  j["ih_offset"] = ih_offset;
  j["ih_look_offset"] = ih_look_offset;
  j["target_radius"] = target_radius;
  j["target_z"] = target_z;
  j["target_x_range"] = target_x_range;
  j["target_y_min"] = target_y_min;
  j["target_y_max"] = target_y_max;
  j["wall_y"] = wall_y;
  j["wall_half_x"] = wall_half_x;
  j["wall_half_thickness"] = wall_half_thickness;
  j["wall_height_min"] = wall_height_min;
  j["wall_height_max"] = wall_height_max;
  j["gripper_start_z_min"] = gripper_start_z_min;
  j["gripper_start_z_max"] = gripper_start_z_max;
  j["generic_max_distractors"] = generic_max_distractors;
  j["generic_occluder_prob"] = generic_occluder_prob;
  return j.dump(2);
}

WorldConfig WorldConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  WorldConfig cfg;
  auto get_vec = [&j](const char* key, Vec3& out) {
    if (j.contains(key)) {
      out = {j[key].at(0).get<double>(), j[key].at(1).get<double>(),
             j[key].at(2).get<double>()};
    }
  };
  if (j.contains("image_size")) {
    cfg.intrinsics.height = j["image_size"].get<int>();
    cfg.intrinsics.width = cfg.intrinsics.height;
  }
  if (j.contains("focal_px")) cfg.intrinsics.focal_px = j["focal_px"].get<double>();
  get_vec("av_eye", cfg.av_eye);
  get_vec("av_look", cfg.av_look);
  get_vec("ih_offset", cfg.ih_offset);
  get_vec("ih_look_offset", cfg.ih_look_offset);
  auto get_d = [&j](const char* key, double& out) {
    if (j.contains(key)) out = j[key].get<double>();
  };
  get_d("target_radius", cfg.target_radius);
  get_d("target_z", cfg.target_z);
  get_d("target_x_range", cfg.target_x_range);
  get_d("target_y_min", cfg.target_y_min);
  get_d("target_y_max", cfg.target_y_max);
  get_d("wall_y", cfg.wall_y);
  get_d("wall_half_x", cfg.wall_half_x);
  get_d("wall_half_thickness", cfg.wall_half_thickness);
  get_d("wall_height_min", cfg.wall_height_min);
  get_d("wall_height_max", cfg.wall_height_max);
  get_d("gripper_start_z_min", cfg.gripper_start_z_min);
  get_d("gripper_start_z_max", cfg.gripper_start_z_max);
  if (j.contains("generic_max_distractors"))
    cfg.generic_max_distractors = j["generic_max_distractors"].get<int>();
  get_d("generic_occluder_prob", cfg.generic_occluder_prob);
  return cfg;
}

}  // namespace handsight::world
