#pragma once

#include <Eigen/Core>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lssinst/config.hpp"
#include "lssinst/core.hpp"
#include "lssinst/geometry.hpp"
#include "lssinst/tensor.hpp"

namespace lssinst {

/// Constant-velocity ground-truth object. Positions are in the world frame,
/// which coincides with the current (frame 0) ego frame by construction.
struct ObjectTrack {
  int id = 0;
  int class_id = 0;
  Eigen::Vector3d size = {1, 1, 1};       // w, l, h meters
  Eigen::Vector3d position = {0, 0, 0};   // at frame 0
  Eigen::Vector2d velocity = {0, 0};      // m/s
  double yaw = 0.0;
  int signature_channel = 0;

  /// Frame index t counts backwards in time (t frames * tau in the past).
  Eigen::Vector3d position_at_frame(int t, double tau) const {
    return position - tau * t * Eigen::Vector3d(velocity.x(), velocity.y(), 0.0);
  }
};

struct SyntheticScene {
  static constexpr int kFormatVersion = 1;

  std::vector<CameraModeld> rig;
  std::vector<EgoPosed> poses;  // index 0 = current; timestamps decreasing
  std::vector<ObjectTrack> tracks;
  int channels = 0, feat_height = 0, feat_width = 0;
  double tau = 0.5;
  double blob_sigma_px = 3.0;
  std::uint64_t seed = 0;

  int num_frames() const { return static_cast<int>(poses.size()); }
};

/// Surround rig: cameras evenly spaced in yaw, optical axes horizontal,
/// colocated at (0, 0, camera_height) in the ego frame.
inline std::vector<CameraModeld> make_surround_rig(int num_views, double focal_px, int width,
                                                   int height, double camera_height) {
  std::vector<CameraModeld> rig(num_views);
  for (int v = 0; v < num_views; ++v) {
    const double phi = 2.0 * M_PI * v / num_views;
    const double c = std::cos(phi), s = std::sin(phi);
    CameraModeld& cam = rig[v];
    cam.view_id = v;
    cam.intrinsics = {focal_px, focal_px, (width - 1) / 2.0, (height - 1) / 2.0, width,
                      height};
    // Camera axes in ego coordinates: image-x = (s, -c, 0), image-y = down,
    // optical axis = (c, s, 0). Rows of R are those axes.
    Eigen::Matrix3d r;
    r << s, -c, 0, 0, 0, -1, c, s, 0;
    cam.extrinsics.rotation = r;
    cam.extrinsics.translation = -(r * Eigen::Vector3d(0, 0, camera_height));
  }
  return rig;
}

inline SyntheticScene generate_scene(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SyntheticScene scene;
  scene.seed = seed;
  scene.tau = cfg.tau;
  scene.channels = cfg.channels;
  scene.feat_height = cfg.image_height;
  scene.feat_width = cfg.image_width;
  scene.blob_sigma_px = cfg.scene.blob_sigma_px;
  scene.rig = make_surround_rig(cfg.scene.num_views, cfg.scene.focal_px, cfg.image_width,
                                cfg.image_height, cfg.scene.camera_height);

  // Straight-line ego trajectory along +x; frame t is t*tau in the past.
  for (int t = 0; t <= cfg.history; ++t) {
    EgoPosed pose;
    pose.timestamp = -cfg.tau * t;
    pose.ego_to_world.translation = {-cfg.scene.ego_speed * cfg.tau * t, 0.0, 0.0};
    scene.poses.push_back(pose);
  }

  Rng rng(seed);
  const double r_max =
      0.85 * std::min({-cfg.bev.range_min[0], -cfg.bev.range_min[1],
                       cfg.bev.range_min[0] + cfg.bev.grid_width * cfg.bev.cell_size(),
                       cfg.bev.range_min[1] + cfg.bev.grid_height * cfg.bev.cell_size()});
  const double r_min = std::max(4.0, cfg.depth_min + 2.0);
  for (int i = 0; i < cfg.scene.num_objects; ++i) {
    ObjectTrack obj;
    obj.id = i;
    obj.class_id = 0;
    const bool small = rng.uniform() < cfg.scene.small_object_fraction;
    if (small) {
      obj.size = {0.4 + 0.3 * rng.uniform(), 0.4 + 0.3 * rng.uniform(),
                  0.9 + 0.6 * rng.uniform()};
    } else {
      obj.size = {1.8 + 0.4 * rng.uniform(), 4.0 + 1.0 * rng.uniform(),
                  1.5 + 0.5 * rng.uniform()};
    }
    const double radius = r_min + (r_max - r_min) * rng.uniform();
    const double theta = 2.0 * M_PI * rng.uniform();
    obj.position = {radius * std::cos(theta), radius * std::sin(theta), obj.size.z() / 2.0};
    const double speed = cfg.scene.max_speed * rng.uniform();
    const double dir = 2.0 * M_PI * rng.uniform();
    obj.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
    obj.yaw = 2.0 * M_PI * rng.uniform();
    obj.signature_channel = i % cfg.channels;
    scene.tracks.push_back(obj);
  }
  return scene;
}

/// Rasterizes every visible object center as an isotropic Gaussian blob
/// (peak 1) in its signature channel. Occlusion is ignored; overlapping blobs
/// combine by max so the peak stays at 1.
inline std::vector<FeatureGrid> render_features(const SyntheticScene& scene, int t) {
  if (t < 0 || t >= scene.num_frames())
    throw InvalidConfig("frame", "render_features: frame index out of range");
  std::vector<FeatureGrid> out;
  const SE3d world_to_ego = se3_inverse(scene.poses[t].ego_to_world);
  const double sigma = scene.blob_sigma_px;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  for (const CameraModeld& cam : scene.rig) {
    FeatureGrid grid(scene.channels, scene.feat_height, scene.feat_width);
    grid.frame = t;
    grid.view = cam.view_id;
    for (const ObjectTrack& obj : scene.tracks) {
      const Eigen::Vector3d p_ego = world_to_ego.apply(obj.position_at_frame(t, scene.tau));
      const auto proj = project_point(cam, p_ego);
      if (!proj) continue;
      if (proj->u < -radius || proj->u > scene.feat_width - 1 + radius || proj->v < -radius ||
          proj->v > scene.feat_height - 1 + radius)
        continue;
      const int x0 = std::max(0, static_cast<int>(std::floor(proj->u)) - radius);
      const int x1 = std::min(scene.feat_width - 1, static_cast<int>(std::ceil(proj->u)) + radius);
      const int y0 = std::max(0, static_cast<int>(std::floor(proj->v)) - radius);
      const int y1 = std::min(scene.feat_height - 1, static_cast<int>(std::ceil(proj->v)) + radius);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dx = x - proj->u;
          const double dy = y - proj->v;
          const double val = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          double& cell = grid.at(obj.signature_channel, y, x);
          cell = std::max(cell, val);
        }
      }
    }
    out.push_back(std::move(grid));
  }
  return out;
}

// --- persistence -----------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json se3_to_json(const SE3d& t) {
  nlohmann::ordered_json j;
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = t.rotation(i, k);
  j["rotation"] = r;
  j["translation"] = {t.translation.x(), t.translation.y(), t.translation.z()};
  return j;
}

inline SE3d se3_from_json(const nlohmann::json& j) {
  SE3d t;
  const auto r = j.at("rotation").get<std::vector<double>>();
  if (r.size() != 9) throw ParseError("scene: rotation must have 9 entries");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) t.rotation(i, k) = r[i * 3 + k];
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (tr.size() != 3) throw ParseError("scene: translation must have 3 entries");
  t.translation = {tr[0], tr[1], tr[2]};
  return t;
}

}  // namespace detail

inline nlohmann::ordered_json scene_to_json(const SyntheticScene& scene) {
  nlohmann::ordered_json j;
  j["version"] = SyntheticScene::kFormatVersion;
  j["seed"] = scene.seed;
  j["tau"] = scene.tau;
  j["blob_sigma_px"] = scene.blob_sigma_px;
  j["feature_dims"] = {{"channels", scene.channels},
                       {"height", scene.feat_height},
                       {"width", scene.feat_width}};
  j["rig"] = nlohmann::ordered_json::array();
  for (const auto& cam : scene.rig) {
    nlohmann::ordered_json cj;
    cj["view_id"] = cam.view_id;
    cj["intrinsics"] = {{"fx", cam.intrinsics.fx},     {"fy", cam.intrinsics.fy},
                        {"cx", cam.intrinsics.cx},     {"cy", cam.intrinsics.cy},
                        {"width", cam.intrinsics.image_width},
                        {"height", cam.intrinsics.image_height}};
    cj["extrinsics"] = detail::se3_to_json(cam.extrinsics);
    j["rig"].push_back(cj);
  }
  j["poses"] = nlohmann::ordered_json::array();
  for (const auto& pose : scene.poses) {
    nlohmann::ordered_json pj;
    pj["timestamp"] = pose.timestamp;
    pj["ego_to_world"] = detail::se3_to_json(pose.ego_to_world);
    j["poses"].push_back(pj);
  }
  j["tracks"] = nlohmann::ordered_json::array();
  for (const auto& obj : scene.tracks) {
    nlohmann::ordered_json oj;
    oj["id"] = obj.id;
    oj["class_id"] = obj.class_id;
    oj["size"] = {obj.size.x(), obj.size.y(), obj.size.z()};
    oj["position"] = {obj.position.x(), obj.position.y(), obj.position.z()};
    oj["velocity"] = {obj.velocity.x(), obj.velocity.y()};
    oj["yaw"] = obj.yaw;
    oj["signature_channel"] = obj.signature_channel;
    j["tracks"].push_back(oj);
  }
  return j;
}

inline SyntheticScene scene_from_json(const nlohmann::json& j) {
  auto require = [&j](const char* field) -> const nlohmann::json& {
    if (!j.contains(field)) throw ParseError("scene: missing required field '" +
                                             std::string(field) + "'");
    return j.at(field);
  };
  try {
    const int version = require("version").get<int>();
    if (version != SyntheticScene::kFormatVersion)
      throw ParseError("scene: unsupported format version " + std::to_string(version));
    SyntheticScene s;
    s.seed = require("seed").get<std::uint64_t>();
    s.tau = require("tau").get<double>();
    s.blob_sigma_px = require("blob_sigma_px").get<double>();
    const auto& dims = require("feature_dims");
    s.channels = dims.at("channels").get<int>();
    s.feat_height = dims.at("height").get<int>();
    s.feat_width = dims.at("width").get<int>();
    for (const auto& cj : require("rig")) {
      CameraModeld cam;
      cam.view_id = cj.at("view_id").get<int>();
      const auto& in = cj.at("intrinsics");
      cam.intrinsics = {in.at("fx").get<double>(), in.at("fy").get<double>(),
                        in.at("cx").get<double>(), in.at("cy").get<double>(),
                        in.at("width").get<int>(), in.at("height").get<int>()};
      cam.extrinsics = detail::se3_from_json(cj.at("extrinsics"));
      s.rig.push_back(cam);
    }
    for (const auto& pj : require("poses")) {
      EgoPosed pose;
      pose.timestamp = pj.at("timestamp").get<double>();
      pose.ego_to_world = detail::se3_from_json(pj.at("ego_to_world"));
      s.poses.push_back(pose);
    }
    for (const auto& oj : require("tracks")) {
      ObjectTrack obj;
      obj.id = oj.at("id").get<int>();
      obj.class_id = oj.at("class_id").get<int>();
      const auto size = oj.at("size").get<std::vector<double>>();
      const auto pos = oj.at("position").get<std::vector<double>>();
      const auto vel = oj.at("velocity").get<std::vector<double>>();
      if (size.size() != 3 || pos.size() != 3 || vel.size() != 2)
        throw ParseError("scene: track vector fields have wrong arity");
      obj.size = {size[0], size[1], size[2]};
      obj.position = {pos[0], pos[1], pos[2]};
      obj.velocity = {vel[0], vel[1]};
      obj.yaw = oj.at("yaw").get<double>();
      obj.signature_channel = oj.at("signature_channel").get<int>();
      s.tracks.push_back(obj);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scene: " + std::string(e.what()));
  }
}

inline void save_scene(const std::string& path, const SyntheticScene& scene) {
  std::ofstream os(path);
  if (!os) throw ParseError("save_scene: cannot open " + path);
  os << scene_to_json(scene).dump(2) << '\n';
}

inline SyntheticScene load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("load_scene: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_scene: " + std::string(e.what()));
  }
  return scene_from_json(j);
}

/// Seeded random rotation of each camera extrinsic (the robustness hook).
inline void jitter_extrinsics(SyntheticScene& scene, double magnitude_rad,
                              std::uint64_t seed) {
  if (magnitude_rad == 0.0) return;
  Rng rng(seed);
  for (auto& cam : scene.rig) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitZ();
    axis.normalize();
    const double angle = magnitude_rad * rng.uniform();
    const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    cam.extrinsics.rotation = r * cam.extrinsics.rotation;
    cam.extrinsics.translation = r * cam.extrinsics.translation;
  }
}

}  // namespace lssinst
