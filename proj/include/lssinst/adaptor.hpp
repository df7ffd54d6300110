#pragma once

#include <Eigen/Core>
#include <vector>

#include "lssinst/bev.hpp"
#include "lssinst/core.hpp"
#include "lssinst/grid_ops.hpp"
#include "lssinst/proposal.hpp"

namespace lssinst {

/// Continuous BEV coordinates of the proposal positions plus the pre-offset
/// bilinear reads used to drive the deformable resampling heads.
struct BEVQueryState {
  Eigen::MatrixXd reprojected;    // N_beta x 2 cell coordinates
  Eigen::VectorXd homogeneous_z;  // constant 1 per entry
  Eigen::MatrixXd seed_features;  // N_beta x C
};

/// Affine map from ego meters to continuous BEV cell coordinates:
/// ((x, y) - range_min) / (sigma * S_v). The z output is the homogeneous
/// constant 1 and is dropped from the returned coordinates.
inline Eigen::MatrixXd reproject_to_bev(const Eigen::MatrixXd& p_o, const BEVSpec& spec) {
  if (p_o.cols() != 3) throw DimensionMismatch("reproject_to_bev: expected N x 3 positions");
  Eigen::MatrixXd out(p_o.rows(), 2);
  const double cell = spec.cell_size();
  out.col(0) = (p_o.col(0).array() - spec.range_min[0]) / cell;
  out.col(1) = (p_o.col(1).array() - spec.range_min[1]) / cell;
  return out;
}

/// Inverse of reproject_to_bev on the xy plane.
inline Eigen::MatrixXd bev_to_ego(const Eigen::MatrixXd& cells, const BEVSpec& spec) {
  Eigen::MatrixXd out(cells.rows(), 2);
  const double cell = spec.cell_size();
  out.col(0) = cells.col(0).array() * cell + spec.range_min[0];
  out.col(1) = cells.col(1).array() * cell + spec.range_min[1];
  return out;
}

inline BEVQueryState make_query_state(const BEVGrid& bev, const Eigen::MatrixXd& p_o) {
  BEVQueryState state;
  state.reprojected = reproject_to_bev(p_o, bev.spec);
  state.homogeneous_z = Eigen::VectorXd::Ones(p_o.rows());
  state.seed_features.resize(p_o.rows(), bev.grid.channels());
  for (Eigen::Index i = 0; i < p_o.rows(); ++i)
    state.seed_features.row(i) =
        bilinear_sample(bev.grid, state.reprojected(i, 0), state.reprojected(i, 1)).transpose();
  return state;
}

struct ResampleParams {
  LinearMap offset_head;  // C -> K*2, cell units
  LinearMap weight_head;  // C -> K, softmaxed
  LinearMap inner;        // W'_alpha, C -> C
  LinearMap outer;        // W_alpha, C -> C
};

/// Deformable resampling of the BEV grid around the reprojected proposal
/// coordinates. Offsets and attention logits are linear in the seed features;
/// weights are softmax-normalized over the K sampling points.
inline Eigen::MatrixXd adaptive_resample(const BEVGrid& bev, const BEVQueryState& state,
                                         const ResampleParams& params) {
  const int k = params.weight_head.out_dim();
  if (params.offset_head.out_dim() != 2 * k)
    throw DimensionMismatch("adaptive_resample: offset head must emit K*2 values");
  const Eigen::Index n = state.reprojected.rows();
  std::vector<Eigen::MatrixXd> offsets(n);
  Eigen::MatrixXd logits(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd seed = state.seed_features.row(i).transpose();
    const Eigen::VectorXd off = params.offset_head.apply(seed);
    offsets[i].resize(k, 2);
    for (int j = 0; j < k; ++j) offsets[i].row(j) << off[2 * j], off[2 * j + 1];
    logits.row(i) = params.weight_head.apply(seed).transpose();
  }
  const SamplingPattern pattern =
      SamplingPattern::from_logits(state.reprojected, offsets, logits);
  return deformable_aggregate(bev.grid, pattern, params.inner, params.outer);
}

/// 3x3 convolution (zero padding 1) followed by inference-mode batch norm
/// with stored statistics.
struct ConverterParams {
  // taps[dy * 3 + dx] is the C_out x C_in matrix for image offset
  // (dx - 1, dy - 1).
  std::vector<Eigen::MatrixXd> taps;
  Eigen::VectorXd bn_mean, bn_var, bn_gamma, bn_beta;
  double bn_epsilon = 1e-5;

  static ConverterParams identity(int channels) {
    ConverterParams p;
    p.taps.assign(9, Eigen::MatrixXd::Zero(channels, channels));
    p.taps[4] = Eigen::MatrixXd::Identity(channels, channels);  // center tap
    p.bn_mean = Eigen::VectorXd::Zero(channels);
    p.bn_var = Eigen::VectorXd::Ones(channels);
    p.bn_gamma = Eigen::VectorXd::Ones(channels);
    p.bn_beta = Eigen::VectorXd::Zero(channels);
    p.bn_epsilon = 0.0;
    return p;
  }
};

inline BEVGrid convert_features(const BEVGrid& input, const ConverterParams& params) {
  if (params.taps.size() != 9)
    throw DimensionMismatch("convert_features: expected 9 kernel taps");
  const int c_in = input.grid.channels();
  const int c_out = static_cast<int>(params.taps[0].rows());
  for (const auto& tap : params.taps)
    if (tap.rows() != c_out || tap.cols() != c_in)
      throw DimensionMismatch("convert_features: inconsistent kernel tap shapes");
  if (params.bn_mean.size() != c_out || params.bn_var.size() != c_out ||
      params.bn_gamma.size() != c_out || params.bn_beta.size() != c_out)
    throw DimensionMismatch("convert_features: BN statistics must have C_out entries");

  const int h = input.spec.grid_height;
  const int w = input.spec.grid_width;
  BEVGrid out;
  out.spec = input.spec;
  out.frame = input.frame;
  out.grid = FeatureGrid(c_out, h, w);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const Eigen::MatrixXd& tap = params.taps[(dy + 1) * 3 + (dx + 1)];
      for (int y = 0; y < h; ++y) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        if (x1 <= x0) continue;
        out.grid.data().middleCols(static_cast<Eigen::Index>(y) * w + x0, x1 - x0) +=
            tap * input.grid.data().middleCols(
                      static_cast<Eigen::Index>(sy) * w + x0 + dx, x1 - x0);
      }
    }
  }
  const Eigen::ArrayXd inv_std = (params.bn_var.array() + params.bn_epsilon).sqrt().inverse();
  for (int ch = 0; ch < c_out; ++ch) {
    out.grid.data().row(ch) =
        (out.grid.data().row(ch).array() - params.bn_mean[ch]) * inv_std[ch] *
            params.bn_gamma[ch] +
        params.bn_beta[ch];
  }
  return out;
}

/// Learnable queries independent of BEV proposals.
struct PotentialQueries {
  Eigen::MatrixXd features;         // N_gamma x C
  Eigen::MatrixXd reference_boxes;  // N_gamma x 10
};

enum class Provenance { Proposal, Potential };

struct SparseQuerySet {
  Eigen::MatrixXd features;  // N x C
  Eigen::MatrixXd boxes;     // N x 10
  std::vector<Provenance> provenance;

  Eigen::Index size() const { return features.rows(); }
};

/// Concatenates the adapted proposal features with the potential queries;
/// both inputs land bit-exactly in their slices, proposals first.
inline SparseQuerySet compose_queries(const Eigen::MatrixXd& adapted,
                                      const ProposalSet& proposals,
                                      const PotentialQueries& potential) {
  const Eigen::Index n_beta = adapted.rows();
  const Eigen::Index n_gamma = potential.features.rows();
  if (static_cast<Eigen::Index>(proposals.size()) != n_beta)
    throw DimensionMismatch("compose_queries: adapted features vs proposal count mismatch");
  if (n_gamma > 0 && potential.features.cols() != adapted.cols())
    throw DimensionMismatch("compose_queries: channel mismatch with potential features");
  if (potential.reference_boxes.rows() != n_gamma)
    throw DimensionMismatch("compose_queries: potential boxes vs features mismatch");

  SparseQuerySet out;
  out.features.resize(n_beta + n_gamma, adapted.cols());
  out.boxes.resize(n_beta + n_gamma, 10);
  out.features.topRows(n_beta) = adapted;
  for (Eigen::Index i = 0; i < n_beta; ++i)
    out.boxes.row(i) = proposals.boxes[i].box.transpose();
  if (n_gamma > 0) {
    out.features.bottomRows(n_gamma) = potential.features;
    out.boxes.bottomRows(n_gamma) = potential.reference_boxes;
  }
  out.provenance.assign(n_beta, Provenance::Proposal);
  out.provenance.insert(out.provenance.end(), n_gamma, Provenance::Potential);
  return out;
}

}  // namespace lssinst
