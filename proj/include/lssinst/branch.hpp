#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "lssinst/adaptor.hpp"
#include "lssinst/core.hpp"
#include "lssinst/geometry.hpp"
#include "lssinst/grid_ops.hpp"
#include "lssinst/proposal.hpp"

namespace lssinst {

/// P_box split by element semantics; orientation rows kept unit-norm.
struct BoxPartition {
  Eigen::MatrixXd position;     // N x 3
  Eigen::MatrixXd scale;        // N x 3
  Eigen::MatrixXd velocity;     // N x 2
  Eigen::MatrixXd orientation;  // N x 2, unit rows
  std::vector<bool> degenerate_orientation;
};

inline BoxPartition partition_box(const Eigen::MatrixXd& p_box) {
  if (p_box.cols() != 10) throw DimensionMismatch("partition_box: expected N x 10 boxes");
  BoxPartition parts;
  parts.position = p_box.middleCols(box::kPos, 3);
  parts.scale = p_box.middleCols(box::kScale, 3);
  parts.orientation = p_box.middleCols(box::kOri, 2);
  parts.velocity = p_box.middleCols(box::kVel, 2);
  parts.degenerate_orientation.assign(p_box.rows(), false);
  for (Eigen::Index i = 0; i < p_box.rows(); ++i) {
    const double norm = parts.orientation.row(i).norm();
    if (norm < 1e-12) {
      parts.degenerate_orientation[i] = true;
      parts.orientation.row(i) << 0.0, 1.0;  // yaw 0 convention
    } else {
      parts.orientation.row(i) /= norm;
    }
  }
  return parts;
}

inline Eigen::MatrixXd reassemble_box(const BoxPartition& parts) {
  Eigen::MatrixXd out(parts.position.rows(), 10);
  out.middleCols(box::kPos, 3) = parts.position;
  out.middleCols(box::kScale, 3) = parts.scale;
  out.middleCols(box::kOri, 2) = parts.orientation;
  out.middleCols(box::kVel, 2) = parts.velocity;
  return out;
}

/// Five bias-free projections: two 3 -> C, two 2 -> C, one global C -> C.
struct BoxEmbedParams {
  LinearMap position, scale, velocity, orientation, global;
};

/// G = global( pos(P_pos) + sca(P_sca) + vel(P_vel) + ori(P_ori) ).
inline Eigen::MatrixXd embed_box(const BoxPartition& parts, const BoxEmbedParams& params) {
  const Eigen::MatrixXd local =
      params.position.apply_cols(parts.position.transpose()) +
      params.scale.apply_cols(parts.scale.transpose()) +
      params.velocity.apply_cols(parts.velocity.transpose()) +
      params.orientation.apply_cols(parts.orientation.transpose());
  return params.global.apply_cols(local).transpose();  // N x C
}

struct SampledFeatureStack {
  std::vector<Eigen::MatrixXd> per_frame;       // (T_chi + 1) entries, each N x C
  std::vector<std::vector<bool>> validity;      // per frame, per query
};

struct SpatiotemporalParams {
  LinearMap offset_head;  // C -> (T_chi+1)*K*2, pixel units
  LinearMap weight_head;  // C -> (T_chi+1)*K
  LinearMap inner;        // W'_chi
  LinearMap outer;        // W_chi
  int sample_points = 6;  // K
  int sample_history = 3; // T_chi
  double tau = 0.5;
};

/// Eq.-5-style sampling: constant-velocity compensation in 3D ego space, ego
/// warp per historical frame, projection into every camera of that frame,
/// per-frame learned pixel offsets and softmax weights, deformable
/// aggregation over K points, and a mean over valid views. Queries invisible
/// in every view of a frame get a zero feature and validity false.
inline SampledFeatureStack spatiotemporal_sample(
    const std::vector<std::vector<FeatureGrid>>& features,  // [frame][view]
    const Eigen::MatrixXd& query_features, const BoxPartition& parts,
    const std::vector<CameraModeld>& rig, const std::vector<EgoPosed>& poses,
    const SpatiotemporalParams& params) {
  const int t_chi = params.sample_history;
  const int k = params.sample_points;
  if (static_cast<int>(features.size()) < t_chi + 1 ||
      static_cast<int>(poses.size()) < t_chi + 1)
    throw NoHistory("spatiotemporal_sample: T_chi exceeds supplied frames");
  if (params.offset_head.out_dim() != (t_chi + 1) * k * 2 ||
      params.weight_head.out_dim() != (t_chi + 1) * k)
    throw DimensionMismatch("spatiotemporal_sample: head dims disagree with T_chi/K");

  const Eigen::Index n = query_features.rows();
  const int c = params.outer.out_dim();
  SampledFeatureStack stack;
  stack.per_frame.assign(t_chi + 1, Eigen::MatrixXd::Zero(n, c));
  stack.validity.assign(t_chi + 1, std::vector<bool>(n, false));

  for (int t = 0; t <= t_chi; ++t) {
    const SE3d m_t = temporal_transform(poses[0], poses[t]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd feat = query_features.row(i).transpose();
      const Eigen::VectorXd all_offsets = params.offset_head.apply(feat);
      const Eigen::VectorXd all_logits = params.weight_head.apply(feat);
      const Eigen::VectorXd weights =
          softmax_normalize(all_logits.segment(t * k, k));

      const Eigen::Vector3d warped = compensate_and_warp<double>(
          parts.position.row(i).transpose(), parts.velocity.row(i).transpose(), t,
          params.tau, m_t);

      Eigen::VectorXd view_sum = Eigen::VectorXd::Zero(c);
      int valid_views = 0;
      for (std::size_t v = 0; v < rig.size(); ++v) {
        const auto proj = project_point(rig[v], warped);
        if (!proj) continue;
        const FeatureGrid& img = features[t][v];
        if (proj->u < 0.0 || proj->u > img.width() - 1 || proj->v < 0.0 ||
            proj->v > img.height() - 1)
          continue;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(params.inner.out_dim());
        for (int j = 0; j < k; ++j) {
          const double du = all_offsets[(t * k + j) * 2];
          const double dv = all_offsets[(t * k + j) * 2 + 1];
          acc += weights[j] *
                 params.inner.apply(bilinear_sample(img, proj->u + du, proj->v + dv));
        }
        view_sum += params.outer.apply(acc);
        ++valid_views;
      }
      if (valid_views > 0) {
        stack.per_frame[t].row(i) = (view_sum / valid_views).transpose();
        stack.validity[t][i] = true;
      }
    }
  }
  return stack;
}

/// Iterative fusion with long-term suppression: for t = T_chi down to 1,
/// scale the frame-t feature by lambda, concatenate onto frame t-1, and
/// collapse through the encoder. Returns the final frame-0 feature.
inline Eigen::MatrixXd temporal_fuse(const SampledFeatureStack& stack, double lambda,
                                     const MlpSpec& encoder) {
  if (stack.per_frame.empty()) throw NoHistory("temporal_fuse: empty stack");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw LambdaOutOfRange("temporal_fuse: lambda must lie in (0, 1)");
  std::vector<Eigen::MatrixXd> f = stack.per_frame;
  const Eigen::Index n = f.front().rows();
  const Eigen::Index c = f.front().cols();
  for (int t = static_cast<int>(f.size()) - 1; t >= 1; --t) {
    f[t] *= lambda;
    Eigen::MatrixXd fused(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd cat(2 * c);
      cat.head(c) = f[t - 1].row(i).transpose();
      cat.tail(c) = f[t].row(i).transpose();
      fused.row(i) = mlp_apply(encoder, cat).transpose();
    }
    f[t - 1] = fused;
  }
  return f.front();
}

struct RefineParams {
  MlpSpec regression;  // (F_chi + G_chi) -> 10-dim box offset
  double eta = 3.0;
};

/// Residual feature update plus box-offset regression; orientation rows are
/// renormalized after the additive update.
inline void refine_layer(SparseQuerySet& queries, const Eigen::MatrixXd& embedding,
                         const Eigen::MatrixXd& f_delta, const RefineParams& params) {
  if (f_delta.rows() != queries.size() || embedding.rows() != queries.size())
    throw DimensionMismatch("refine_layer: row count mismatch");
  queries.features += params.eta * f_delta;
  for (Eigen::Index i = 0; i < queries.size(); ++i) {
    const Eigen::VectorXd delta = mlp_apply(
        params.regression,
        (queries.features.row(i) + embedding.row(i)).transpose());
    if (delta.size() != 10)
      throw DimensionMismatch("refine_layer: regression head must emit 10 values");
    queries.boxes.row(i) += delta.transpose();
    const double norm = queries.boxes.row(i).segment(box::kOri, 2).norm();
    if (norm < 1e-12)
      queries.boxes.row(i).segment(box::kOri, 2) << 0.0, 1.0;
    else
      queries.boxes.row(i).segment(box::kOri, 2) /= norm;
  }
}

struct DecoderLayerParams {
  AttentionParams attention;
  SpatiotemporalParams sampling;
  MlpSpec temporal_encoder;
  RefineParams refine;
  LinearMap classifier;  // C -> 1, used after the last layer
};

struct DecoderParams {
  BoxEmbedParams embedding;
  std::vector<DecoderLayerParams> layers;
  double lambda = 0.6;
  int out_box_num = 300;
};

struct Detection {
  ScoredBox box;
  Provenance provenance = Provenance::Proposal;
};

/// Runs the full decoder: per layer embed -> self-attention -> spatiotemporal
/// sampling -> temporal fusion -> residual refinement, then a sigmoid
/// classification head over the final features. Output is sorted by score
/// (stable in query order) and truncated to out_box_num.
inline std::vector<Detection> decode(SparseQuerySet queries,
                                     const std::vector<std::vector<FeatureGrid>>& features,
                                     const std::vector<CameraModeld>& rig,
                                     const std::vector<EgoPosed>& poses,
                                     const DecoderParams& params) {
  if (params.layers.empty()) throw DimensionMismatch("decode: need at least one layer");
  for (const auto& layer : params.layers) {
    const BoxPartition parts = partition_box(queries.boxes);
    const Eigen::MatrixXd embedding = embed_box(parts, params.embedding);
    queries.features = self_attention(queries.features, embedding, layer.attention);
    const SampledFeatureStack stack = spatiotemporal_sample(
        features, queries.features, parts, rig, poses, layer.sampling);
    const Eigen::MatrixXd f_delta =
        temporal_fuse(stack, params.lambda, layer.temporal_encoder);
    refine_layer(queries, embedding, f_delta, layer.refine);
  }

  const LinearMap& cls = params.layers.back().classifier;
  std::vector<Detection> dets(queries.size());
  for (Eigen::Index i = 0; i < queries.size(); ++i) {
    dets[i].box.box = queries.boxes.row(i).transpose();
    dets[i].box.score = sigmoid(cls.apply(queries.features.row(i).transpose())[0]);
    dets[i].provenance = queries.provenance[i];
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.box.score > b.box.score;
  });
  if (static_cast<int>(dets.size()) > params.out_box_num) dets.resize(params.out_box_num);
  return dets;
}

}  // namespace lssinst
