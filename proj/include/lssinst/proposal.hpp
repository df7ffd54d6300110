#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "lssinst/bev.hpp"
#include "lssinst/core.hpp"
#include "lssinst/grid_ops.hpp"

namespace lssinst {

// 10-dim box layout: x, y, z | w, l, h | sin(yaw), cos(yaw) | vx, vy.
using BoxVec = Eigen::Matrix<double, 10, 1>;

namespace box {
inline constexpr int kPos = 0;
inline constexpr int kScale = 3;
inline constexpr int kOri = 6;
inline constexpr int kVel = 8;
}  // namespace box

struct ScoredBox {
  BoxVec box = BoxVec::Zero();
  double score = 0.0;
  int class_id = 0;
};

struct ProposalSet {
  std::vector<ScoredBox> boxes;
  std::vector<bool> padding_mask;  // true = blank padding

  std::size_t size() const { return boxes.size(); }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Per-cell 1x1 head: one score logit plus 10 box regressands. The box (x, y)
/// is the cell center in meters plus the predicted offset.
inline std::vector<ScoredBox> score_and_regress(const BEVGrid& bev, const LinearMap& head) {
  if (head.out_dim() != 11 || head.in_dim() != bev.grid.channels())
    throw DimensionMismatch("score_and_regress: head must map C -> 11");
  const Eigen::MatrixXd raw = head.apply_cols(bev.grid.data());
  std::vector<ScoredBox> out;
  out.reserve(static_cast<std::size_t>(bev.spec.grid_height) * bev.spec.grid_width);
  const double cell = bev.spec.cell_size();
  for (int cy = 0; cy < bev.spec.grid_height; ++cy) {
    for (int cx = 0; cx < bev.spec.grid_width; ++cx) {
      const Eigen::Index col = static_cast<Eigen::Index>(cy) * bev.spec.grid_width + cx;
      ScoredBox b;
      b.score = sigmoid(raw(0, col));
      b.box = raw.col(col).tail<10>();
      b.box[0] += bev.spec.range_min[0] + (cx + 0.5) * cell;
      b.box[1] += bev.spec.range_min[1] + (cy + 0.5) * cell;
      out.push_back(b);
    }
  }
  return out;
}

namespace detail {

// Score desc, then x asc, then y asc.
inline bool proposal_order(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box[0] != b.box[0]) return a.box[0] < b.box[0];
  return a.box[1] < b.box[1];
}

}  // namespace detail

/// Score-threshold filter followed by greedy BEV center-distance suppression.
inline std::vector<ScoredBox> nms_filter(std::vector<ScoredBox> candidates,
                                         double score_threshold, double suppression_radius) {
  candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                  [&](const ScoredBox& b) {
                                    return b.score < score_threshold;
                                  }),
                   candidates.end());
  std::sort(candidates.begin(), candidates.end(), detail::proposal_order);
  std::vector<ScoredBox> kept;
  const double r2 = suppression_radius * suppression_radius;
  for (const ScoredBox& cand : candidates) {
    bool suppressed = false;
    for (const ScoredBox& k : kept) {
      const double dx = cand.box[0] - k.box[0];
      const double dy = cand.box[1] - k.box[1];
      if (dx * dx + dy * dy < r2) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

/// Keeps the k best boxes; short sets are padded with seeded blanks (random
/// position over the BEV range, yaw pi/2, zero scale and velocity, score 0).
inline ProposalSet topk_pad(std::vector<ScoredBox> filtered, int k, std::uint64_t rng_seed,
                            const BEVSpec& spec) {
  std::sort(filtered.begin(), filtered.end(), detail::proposal_order);
  if (static_cast<int>(filtered.size()) > k) filtered.resize(k);
  ProposalSet out;
  out.boxes = std::move(filtered);
  out.padding_mask.assign(out.boxes.size(), false);
  Rng rng(rng_seed);
  const double xs = spec.grid_width * spec.cell_size();
  const double ys = spec.grid_height * spec.cell_size();
  while (static_cast<int>(out.boxes.size()) < k) {
    ScoredBox pad;
    pad.box[0] = spec.range_min[0] + xs * rng.uniform();
    pad.box[1] = spec.range_min[1] + ys * rng.uniform();
    pad.box[box::kOri] = 1.0;      // sin(pi/2)
    pad.box[box::kOri + 1] = 0.0;  // cos(pi/2)
    pad.score = 0.0;
    out.boxes.push_back(pad);
    out.padding_mask.push_back(true);
  }
  return out;
}

}  // namespace lssinst
