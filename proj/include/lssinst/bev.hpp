#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "lssinst/config.hpp"
#include "lssinst/core.hpp"
#include "lssinst/geometry.hpp"
#include "lssinst/grid_ops.hpp"
#include "lssinst/tensor.hpp"

namespace lssinst {

/// Scene-level BEV feature with its range/voxel metadata. Grid node (i, j)
/// corresponds to ego coordinates range_min + (i, j) * cell_size; a point
/// pools into the cell at the floor of its continuous BEV coordinate.
struct BEVGrid {
  BEVSpec spec;
  FeatureGrid grid;  // C x H_beta x W_beta
  int frame = 0;
};

inline Eigen::Vector2d bev_cell_to_ego(const BEVSpec& spec, double cx, double cy) {
  return {spec.range_min[0] + cx * spec.cell_size(),
          spec.range_min[1] + cy * spec.cell_size()};
}

/// Per-view depth distribution over D monotone bins; probs stored as a
/// D x H x W grid, rows-sum-to-1 per pixel.
struct DepthDistribution {
  std::vector<double> bins;
  FeatureGrid probs;  // channels = D
};

inline std::vector<double> uniform_depth_bins(int count, double depth_min, double depth_max) {
  std::vector<double> bins(count);
  for (int i = 0; i < count; ++i)
    bins[i] = depth_min + (depth_max - depth_min) * i / (count - 1);
  return bins;
}

/// 1x1 linear head over the per-pixel feature, softmaxed over depth bins.
inline DepthDistribution predict_depth_distribution(const FeatureGrid& feature,
                                                    const LinearMap& head,
                                                    const std::vector<double>& bins) {
  if (bins.size() < 2) throw DimensionMismatch("predict_depth_distribution: need >= 2 bins");
  for (std::size_t i = 1; i < bins.size(); ++i)
    if (!(bins[i] > bins[i - 1]))
      throw DimensionMismatch("predict_depth_distribution: bins must increase");
  if (head.out_dim() != static_cast<int>(bins.size()))
    throw DimensionMismatch("predict_depth_distribution: head out_dim != bin count");

  DepthDistribution out;
  out.bins = bins;
  out.probs = FeatureGrid(static_cast<int>(bins.size()), feature.height(), feature.width());
  const Eigen::MatrixXd logits = head.apply_cols(feature.data());
  for (Eigen::Index col = 0; col < logits.cols(); ++col)
    out.probs.data().col(col) = softmax_normalize(logits.col(col));
  return out;
}

/// Frustum of lifted points: ego positions, per-point features and depth
/// weights. One point per (pixel, depth bin).
struct FrustumCloud {
  Eigen::MatrixXd points;    // M x 3, ego meters
  Eigen::MatrixXd features;  // C x M
  Eigen::VectorXd weights;   // M

  Eigen::Index size() const { return points.rows(); }
};

/// Lifts every pixel to every depth bin. Pixel (u, v) of the feature map is
/// treated as image coordinate (u, v); the splat weight is the bin
/// probability and the carried feature is the raw pixel feature.
inline FrustumCloud lift_frustum(const FeatureGrid& feature, const DepthDistribution& depth,
                                 const CameraModeld& cam) {
  if (depth.probs.height() != feature.height() || depth.probs.width() != feature.width())
    throw DimensionMismatch("lift_frustum: depth/feature spatial dims differ");
  const int d = depth.probs.channels();
  const int h = feature.height();
  const int w = feature.width();
  FrustumCloud out;
  const Eigen::Index m = static_cast<Eigen::Index>(d) * h * w;
  out.points.resize(m, 3);
  out.features.resize(feature.channels(), m);
  out.weights.resize(m);
  Eigen::Index idx = 0;
  for (int di = 0; di < d; ++di) {
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u, ++idx) {
        out.points.row(idx) = unproject_pixel<double>(cam, u, v, depth.bins[di]).transpose();
        out.features.col(idx) = feature.column(v, u);
        out.weights[idx] = depth.probs.at(di, v, u);
      }
    }
  }
  return out;
}

/// Scatter-adds weight * feature into BEV cells; points outside the xy range
/// or z bounds are dropped, the z axis is collapsed by summation.
inline BEVGrid voxel_pool(const FrustumCloud& cloud, const BEVSpec& spec, int channels) {
  BEVGrid out;
  out.spec = spec;
  out.grid = FeatureGrid(channels, spec.grid_height, spec.grid_width);
  const double cell = spec.cell_size();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const double z = cloud.points(i, 2);
    if (z < spec.z_bounds[0] || z > spec.z_bounds[1]) continue;
    const int cx = static_cast<int>(std::floor((cloud.points(i, 0) - spec.range_min[0]) / cell));
    const int cy = static_cast<int>(std::floor((cloud.points(i, 1) - spec.range_min[1]) / cell));
    if (!out.grid.in_bounds(cx, cy)) continue;
    out.grid.data().col(static_cast<Eigen::Index>(cy) * spec.grid_width + cx) +=
        cloud.weights[i] * cloud.features.col(i);
  }
  return out;
}

inline void voxel_pool_into(BEVGrid& accum, const FrustumCloud& cloud) {
  const BEVGrid part = voxel_pool(cloud, accum.spec, accum.grid.channels());
  accum.grid.data() += part.grid.data();
}

/// Inverse-warps a historical BEV grid into the current ego frame: each
/// current cell center is mapped through m_t (current -> historical ego, z
/// dropped) and bilinearly read from the historical grid with zero padding.
inline BEVGrid align_bev(const BEVGrid& grid, const SE3d& m_t) {
  BEVGrid out;
  out.spec = grid.spec;
  out.frame = grid.frame;
  out.grid = FeatureGrid(grid.grid.channels(), grid.spec.grid_height, grid.spec.grid_width);
  const double cell = grid.spec.cell_size();
  for (int cy = 0; cy < grid.spec.grid_height; ++cy) {
    for (int cx = 0; cx < grid.spec.grid_width; ++cx) {
      const Eigen::Vector2d ego = bev_cell_to_ego(grid.spec, cx, cy);
      const Eigen::Vector3d hist = m_t.apply(Eigen::Vector3d(ego.x(), ego.y(), 0.0));
      const double sx = (hist.x() - grid.spec.range_min[0]) / cell;
      const double sy = (hist.y() - grid.spec.range_min[1]) / cell;
      out.grid.set_column(cy, cx, bilinear_sample(grid.grid, sx, sy));
    }
  }
  return out;
}

/// Channel concatenation of the aligned sequence (current frame first), a
/// 1x1 linear reduction back to C channels, and a residual from the current
/// frame's grid.
inline BEVGrid bev_temporal_encode(const std::vector<BEVGrid>& aligned,
                                   const LinearMap& reduce) {
  if (aligned.empty()) throw SpecMismatch("bev_temporal_encode: no grids supplied");
  const int c = aligned.front().grid.channels();
  const int h = aligned.front().spec.grid_height;
  const int w = aligned.front().spec.grid_width;
  for (const auto& g : aligned) {
    if (g.grid.channels() != c || g.spec.grid_height != h || g.spec.grid_width != w)
      throw SpecMismatch("bev_temporal_encode: mismatched grid specs");
  }
  if (reduce.in_dim() != c * static_cast<int>(aligned.size()) || reduce.out_dim() != c)
    throw DimensionMismatch("bev_temporal_encode: reduction map expects " +
                            std::to_string(reduce.in_dim()) + " inputs");

  Eigen::MatrixXd stacked(c * aligned.size(), static_cast<Eigen::Index>(h) * w);
  for (std::size_t f = 0; f < aligned.size(); ++f)
    stacked.middleRows(f * c, c) = aligned[f].grid.data();

  BEVGrid out;
  out.spec = aligned.front().spec;
  out.frame = aligned.front().frame;
  out.grid = FeatureGrid(c, h, w);
  out.grid.data() = reduce.apply_cols(stacked) + aligned.front().grid.data();
  return out;
}

}  // namespace lssinst
