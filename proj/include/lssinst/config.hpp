#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lssinst/core.hpp"

namespace lssinst {

struct BEVSpec {
  std::array<double, 2> range_min = {-51.2, -51.2};
  double voxel_size = 0.8;       // S_v, meters
  double upsample_factor = 1.0;  // sigma
  int grid_height = 128;         // H_beta (y cells)
  int grid_width = 128;          // W_beta (x cells)
  std::array<double, 2> z_bounds = {-5.0, 3.0};

  double cell_size() const { return upsample_factor * voxel_size; }
};

struct SceneConfig {
  int num_views = 6;
  int num_objects = 12;
  double small_object_fraction = 0.4;  // "BEV-insensitive" mix
  double max_speed = 8.0;              // m/s
  double ego_speed = 5.0;              // m/s, straight line along +x
  double blob_sigma_px = 3.0;
  double focal_px = 60.0;
  double camera_height = 1.6;  // meters above ego origin
};

struct RunConfig {
  BEVSpec bev;
  // Depth distribution stub: D uniform bins over [depth_min, depth_max].
  int depth_bins = 16;
  double depth_min = 1.0;
  double depth_max = 60.0;

  int channels = 32;       // C
  int image_height = 32;   // feature-map H
  int image_width = 88;    // feature-map W

  int history = 3;         // T
  int sample_history = 3;  // T_chi
  int sample_points = 6;   // K
  double eta = 3.0;
  double lambda = 0.6;
  int layers = 6;          // L
  int heads = 8;
  double tau = 0.5;        // seconds between frames

  int num_proposals = 450;  // N_beta
  int num_potential = 450;  // N_gamma
  double nms_score_threshold = 0.1;
  double nms_radius = 1.0;  // meters
  int out_box_num = 300;

  std::uint64_t scene_seed = 1;
  std::uint64_t param_seed = 1;
  std::uint64_t pad_seed = 1;
  double extrinsics_jitter = 0.0;  // radians, optional perturbation

  SceneConfig scene;

  void validate() const;
};

inline void RunConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& msg) {
    throw InvalidConfig(field, "config field '" + field + "': " + msg);
  };
  if (bev.voxel_size <= 0) bad("bev.voxel_size", "must be > 0");
  if (bev.upsample_factor <= 0) bad("bev.upsample_factor", "must be > 0");
  if (bev.grid_height <= 0 || bev.grid_width <= 0) bad("bev.grid", "dims must be positive");
  if (bev.z_bounds[0] >= bev.z_bounds[1]) bad("bev.z_bounds", "z_min must be < z_max");
  if (depth_bins < 2) bad("depth_bins", "need at least 2 bins");
  if (!(depth_min > 0) || depth_max <= depth_min) bad("depth_range", "need 0 < min < max");
  if (channels <= 0) bad("channels", "must be positive");
  if (channels % heads != 0) bad("heads", "channels must be divisible by heads");
  if (image_height <= 0 || image_width <= 0) bad("image_dims", "must be positive");
  if (history < 0) bad("history", "must be >= 0");
  if (sample_history < 0 || sample_history > history)
    bad("sample_history", "requires 0 <= T_chi <= T");
  if (sample_points <= 0) bad("sample_points", "must be positive");
  if (eta <= 0) bad("eta", "must be > 0");
  if (!(lambda > 0.0 && lambda < 1.0)) bad("lambda", "must lie in (0, 1)");
  if (layers < 1) bad("layers", "need at least one layer");
  if (tau <= 0) bad("tau", "must be > 0");
  if (num_proposals <= 0) bad("num_proposals", "must be positive");
  if (num_potential < 0) bad("num_potential", "must be >= 0");
  if (nms_score_threshold < 0 || nms_score_threshold > 1)
    bad("nms_score_threshold", "must lie in [0, 1]");
  if (nms_radius <= 0) bad("nms_radius", "must be > 0");
  if (out_box_num <= 0) bad("out_box_num", "must be positive");
  if (scene.num_views <= 0) bad("scene.num_views", "must be positive");
  if (scene.num_objects < 0) bad("scene.num_objects", "must be >= 0");
  if (scene.blob_sigma_px <= 0) bad("scene.blob_sigma_px", "must be > 0");
}

namespace detail {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("bev")) {
    const auto& b = j.at("bev");
    detail::maybe_get(b, "range_min", c.bev.range_min);
    detail::maybe_get(b, "voxel_size", c.bev.voxel_size);
    detail::maybe_get(b, "upsample_factor", c.bev.upsample_factor);
    detail::maybe_get(b, "grid_height", c.bev.grid_height);
    detail::maybe_get(b, "grid_width", c.bev.grid_width);
    detail::maybe_get(b, "z_bounds", c.bev.z_bounds);
  }
  detail::maybe_get(j, "depth_bins", c.depth_bins);
  detail::maybe_get(j, "depth_min", c.depth_min);
  detail::maybe_get(j, "depth_max", c.depth_max);
  detail::maybe_get(j, "channels", c.channels);
  detail::maybe_get(j, "image_height", c.image_height);
  detail::maybe_get(j, "image_width", c.image_width);
  detail::maybe_get(j, "history", c.history);
  detail::maybe_get(j, "sample_history", c.sample_history);
  detail::maybe_get(j, "sample_points", c.sample_points);
  detail::maybe_get(j, "eta", c.eta);
  detail::maybe_get(j, "lambda", c.lambda);
  detail::maybe_get(j, "layers", c.layers);
  detail::maybe_get(j, "heads", c.heads);
  detail::maybe_get(j, "tau", c.tau);
  detail::maybe_get(j, "num_proposals", c.num_proposals);
  detail::maybe_get(j, "num_potential", c.num_potential);
  detail::maybe_get(j, "nms_score_threshold", c.nms_score_threshold);
  detail::maybe_get(j, "nms_radius", c.nms_radius);
  detail::maybe_get(j, "out_box_num", c.out_box_num);
  detail::maybe_get(j, "scene_seed", c.scene_seed);
  detail::maybe_get(j, "param_seed", c.param_seed);
  detail::maybe_get(j, "pad_seed", c.pad_seed);
  detail::maybe_get(j, "extrinsics_jitter", c.extrinsics_jitter);
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    detail::maybe_get(s, "num_views", c.scene.num_views);
    detail::maybe_get(s, "num_objects", c.scene.num_objects);
    detail::maybe_get(s, "small_object_fraction", c.scene.small_object_fraction);
    detail::maybe_get(s, "max_speed", c.scene.max_speed);
    detail::maybe_get(s, "ego_speed", c.scene.ego_speed);
    detail::maybe_get(s, "blob_sigma_px", c.scene.blob_sigma_px);
    detail::maybe_get(s, "focal_px", c.scene.focal_px);
    detail::maybe_get(s, "camera_height", c.scene.camera_height);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("load_config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_config: " + std::string(e.what()));
  }
  return parse_config(j);
}

}  // namespace lssinst
