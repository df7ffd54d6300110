#pragma once

#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lssinst/adaptor.hpp"
#include "lssinst/bev.hpp"
#include "lssinst/branch.hpp"
#include "lssinst/config.hpp"
#include "lssinst/metrics.hpp"
#include "lssinst/params.hpp"
#include "lssinst/proposal.hpp"
#include "lssinst/scene.hpp"

namespace lssinst {

enum class Stage { Proposals, Full };

struct StageTimings {
  double lift_s = 0.0;
  double pool_s = 0.0;
  double adaptor_s = 0.0;
  double sampling_s = 0.0;
  double fusion_s = 0.0;
};

struct PipelineResult {
  std::vector<Detection> detections;
  StageTimings timings;
};

namespace detail {

class StageClock {
 public:
  StageClock() : start_(std::chrono::steady_clock::now()) {}
  double stop() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

inline ConverterParams converter_from_registry(const ParamRegistry& reg) {
  const ParamBlock& kernel = reg.block("adaptor.converter.kernel");
  if (kernel.dims.size() != 4 || kernel.dims[2] != 3 || kernel.dims[3] != 3)
    throw DimensionMismatch("adaptor.converter.kernel: expected C x C x 3 x 3");
  const std::int64_t co = kernel.dims[0];
  const std::int64_t ci = kernel.dims[1];
  ConverterParams p;
  p.taps.assign(9, Eigen::MatrixXd::Zero(co, ci));
  for (std::int64_t a = 0; a < co; ++a)
    for (std::int64_t b = 0; b < ci; ++b)
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx)
          p.taps[dy * 3 + dx](a, b) = kernel.data[((a * ci + b) * 3 + dy) * 3 + dx];
  const Eigen::MatrixXd bn = reg.matrix("adaptor.converter.bn");
  p.bn_mean = bn.row(0).transpose();
  p.bn_var = bn.row(1).transpose();
  p.bn_gamma = bn.row(2).transpose();
  p.bn_beta = bn.row(3).transpose();
  return p;
}

inline PotentialQueries potential_from_registry(const ParamRegistry& reg) {
  return PotentialQueries{reg.matrix("adaptor.potential.features"),
                          reg.matrix("adaptor.potential.boxes")};
}

inline ResampleParams resample_from_registry(const ParamRegistry& reg) {
  return ResampleParams{reg.linear("adaptor.offset"), reg.linear("adaptor.weight"),
                        reg.linear("adaptor.inner"), reg.linear("adaptor.outer")};
}

inline DecoderParams decoder_from_registry(const ParamRegistry& reg, const RunConfig& cfg) {
  DecoderParams p;
  p.lambda = cfg.lambda;
  p.out_box_num = cfg.out_box_num;
  p.embedding = BoxEmbedParams{reg.linear("branch.embed.pos"), reg.linear("branch.embed.sca"),
                               reg.linear("branch.embed.vel"), reg.linear("branch.embed.ori"),
                               reg.linear("branch.embed.global")};
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string b = "branch.layer" + std::to_string(l) + ".";
    DecoderLayerParams layer;
    layer.attention = AttentionParams{reg.linear(b + "attn.q"), reg.linear(b + "attn.k"),
                                      reg.linear(b + "attn.v"), reg.linear(b + "attn.o"),
                                      cfg.heads};
    layer.sampling = SpatiotemporalParams{reg.linear(b + "offset"), reg.linear(b + "weight"),
                                          reg.linear(b + "inner"),  reg.linear(b + "outer"),
                                          cfg.sample_points,        cfg.sample_history,
                                          cfg.tau};
    layer.temporal_encoder = {{reg.linear(b + "enc.0"), Activation::Gelu},
                              {reg.linear(b + "enc.1"), Activation::Gelu},
                              {reg.linear(b + "enc.2"), Activation::None}};
    layer.refine.regression = {{reg.linear(b + "reg.0"), Activation::Gelu},
                               {reg.linear(b + "reg.1"), Activation::None}};
    layer.refine.eta = cfg.eta;
    layer.classifier = reg.linear(b + "cls");
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// BEV branch: per-frame lift + pool over all views, temporal alignment into
/// the current frame, residual temporal encoding.
inline BEVGrid compute_bev(const SyntheticScene& scene,
                           const std::vector<std::vector<FeatureGrid>>& features,
                           const ParamRegistry& reg, const RunConfig& cfg,
                           StageTimings* timings = nullptr) {
  const LinearMap depth_head = reg.linear("bev.depth_head");
  const auto bins = uniform_depth_bins(cfg.depth_bins, cfg.depth_min, cfg.depth_max);
  const int frames = cfg.history + 1;
  if (static_cast<int>(features.size()) < frames || scene.num_frames() < frames)
    throw NoHistory("compute_bev: fewer frames supplied than config.history requires");

  std::vector<BEVGrid> per_frame;
  for (int t = 0; t < frames; ++t) {
    BEVGrid accum;
    accum.spec = cfg.bev;
    accum.frame = t;
    accum.grid = FeatureGrid(cfg.channels, cfg.bev.grid_height, cfg.bev.grid_width);
    for (std::size_t v = 0; v < scene.rig.size(); ++v) {
      detail::StageClock lift_clock;
      const DepthDistribution depth =
          predict_depth_distribution(features[t][v], depth_head, bins);
      const FrustumCloud cloud = lift_frustum(features[t][v], depth, scene.rig[v]);
      if (timings) timings->lift_s += lift_clock.stop();
      detail::StageClock pool_clock;
      voxel_pool_into(accum, cloud);
      if (timings) timings->pool_s += pool_clock.stop();
    }
    per_frame.push_back(std::move(accum));
  }

  std::vector<BEVGrid> aligned;
  aligned.push_back(per_frame[0]);
  for (int t = 1; t < frames; ++t)
    aligned.push_back(align_bev(per_frame[t], temporal_transform(scene.poses[0], scene.poses[t])));
  return bev_temporal_encode(aligned, reg.linear("bev.temporal_reduce"));
}

inline ProposalSet make_proposals(const BEVGrid& bev, const ParamRegistry& reg,
                                  const RunConfig& cfg) {
  const auto candidates = score_and_regress(bev, reg.linear("proposal.head"));
  auto kept = nms_filter(candidates, cfg.nms_score_threshold, cfg.nms_radius);
  return topk_pad(std::move(kept), cfg.num_proposals, cfg.pad_seed, bev.spec);
}

inline PipelineResult run_pipeline(const SyntheticScene& scene,
                                   const std::vector<std::vector<FeatureGrid>>& features,
                                   const ParamRegistry& reg, const RunConfig& cfg,
                                   Stage stage) {
  PipelineResult result;
  const BEVGrid bev = compute_bev(scene, features, reg, cfg, &result.timings);
  const ProposalSet proposals = make_proposals(bev, reg, cfg);

  if (stage == Stage::Proposals) {
    // The BEV-only baseline: NMS survivors, no padding, truncated.
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      if (proposals.padding_mask[i]) continue;
      result.detections.push_back({proposals.boxes[i], Provenance::Proposal});
      if (static_cast<int>(result.detections.size()) >= cfg.out_box_num) break;
    }
    return result;
  }

  detail::StageClock adaptor_clock;
  Eigen::MatrixXd p_o(proposals.size(), 3);
  for (std::size_t i = 0; i < proposals.size(); ++i)
    p_o.row(i) = proposals.boxes[i].box.head<3>().transpose();
  const BEVQueryState state = make_query_state(bev, p_o);
  const BEVGrid converted = convert_features(bev, converter_from_registry(reg));
  const Eigen::MatrixXd adapted =
      adaptive_resample(converted, state, resample_from_registry(reg));
  SparseQuerySet queries =
      compose_queries(adapted, proposals, potential_from_registry(reg));
  result.timings.adaptor_s = adaptor_clock.stop();

  const DecoderParams dec = decoder_from_registry(reg, cfg);

  // Representative sampling/fusion timings from the layer-0 configuration.
  {
    const BoxPartition parts = partition_box(queries.boxes);
    detail::StageClock sampling_clock;
    const SampledFeatureStack stack = spatiotemporal_sample(
        features, queries.features, parts, scene.rig, scene.poses, dec.layers[0].sampling);
    result.timings.sampling_s = sampling_clock.stop();
    detail::StageClock fusion_clock;
    (void)temporal_fuse(stack, dec.lambda, dec.layers[0].temporal_encoder);
    result.timings.fusion_s = fusion_clock.stop();
  }

  result.detections = decode(std::move(queries), features, scene.rig, scene.poses, dec);
  return result;
}

inline std::vector<GroundTruthBox> ground_truth_boxes(const SyntheticScene& scene) {
  std::vector<GroundTruthBox> out;
  for (const ObjectTrack& obj : scene.tracks) {
    GroundTruthBox g;
    g.class_id = obj.class_id;
    g.box << obj.position.x(), obj.position.y(), obj.position.z(), obj.size.x(),
        obj.size.y(), obj.size.z(), std::sin(obj.yaw), std::cos(obj.yaw),
        obj.velocity.x(), obj.velocity.y();
    out.push_back(g);
  }
  return out;
}

// --- detection / metrics serialization -------------------------------------

inline nlohmann::ordered_json detections_to_json(const std::vector<Detection>& dets,
                                                 const nlohmann::ordered_json& meta) {
  nlohmann::ordered_json j;
  j["boxes"] = nlohmann::ordered_json::array();
  for (const Detection& d : dets) {
    nlohmann::ordered_json bj;
    bj["xyz"] = {d.box.box[0], d.box.box[1], d.box.box[2]};
    bj["wlh"] = {d.box.box[3], d.box.box[4], d.box.box[5]};
    bj["yaw_sincos"] = {d.box.box[6], d.box.box[7]};
    bj["vxy"] = {d.box.box[8], d.box.box[9]};
    bj["score"] = d.box.score;
    bj["provenance"] = d.provenance == Provenance::Proposal ? "proposal" : "potential";
    j["boxes"].push_back(bj);
  }
  j["meta"] = meta;
  return j;
}

inline std::vector<Detection> detections_from_json(const nlohmann::json& j) {
  std::vector<Detection> out;
  try {
    for (const auto& bj : j.at("boxes")) {
      Detection d;
      const auto xyz = bj.at("xyz").get<std::vector<double>>();
      const auto wlh = bj.at("wlh").get<std::vector<double>>();
      const auto ori = bj.at("yaw_sincos").get<std::vector<double>>();
      const auto vxy = bj.at("vxy").get<std::vector<double>>();
      if (xyz.size() != 3 || wlh.size() != 3 || ori.size() != 2 || vxy.size() != 2)
        throw ParseError("detections: box vector fields have wrong arity");
      d.box.box << xyz[0], xyz[1], xyz[2], wlh[0], wlh[1], wlh[2], ori[0], ori[1], vxy[0],
          vxy[1];
      d.box.score = bj.at("score").get<double>();
      d.provenance = bj.at("provenance").get<std::string>() == "potential"
                         ? Provenance::Potential
                         : Provenance::Proposal;
      out.push_back(d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("detections: " + std::string(e.what()));
  }
  return out;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["map"] = report.map;
  j["ap_per_threshold"] = nlohmann::ordered_json::object();
  for (const auto& [thr, ap] : report.ap_per_threshold) {
    char key[32];
    std::snprintf(key, sizeof(key), "%.1f", thr);
    j["ap_per_threshold"][key] = ap;
  }
  j["mate"] = report.tp.mate;
  j["mase"] = report.tp.mase;
  j["maoe"] = report.tp.maoe;
  j["mave"] = report.tp.mave;
  j["nds"] = report.nds;
  return j;
}

}  // namespace lssinst
