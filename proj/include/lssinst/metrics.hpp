#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "lssinst/core.hpp"
#include "lssinst/proposal.hpp"

namespace lssinst {

struct GroundTruthBox {
  BoxVec box = BoxVec::Zero();
  int class_id = 0;
};

struct MatchPair {
  int prediction;
  int ground_truth;
  double distance;  // BEV center distance, meters
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_predictions;
  std::vector<int> unmatched_ground_truths;
};

struct TpErrors {
  double mate = 1.0;  // mean translation error, meters
  double mase = 1.0;  // 1 - aligned IoU
  double maoe = 1.0;  // mean abs yaw diff, radians (worst case reported as 1)
  double mave = 1.0;  // mean velocity L2 error
};

struct MetricsReport {
  double map = 0.0;
  std::map<double, double> ap_per_threshold;
  TpErrors tp;
  double nds = 0.0;
};

inline double bev_distance(const BoxVec& a, const BoxVec& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

/// Greedy by descending prediction score; every prediction takes the nearest
/// still-unmatched ground truth within the threshold (ties by GT index).
inline MatchResult match_by_center_distance(const std::vector<ScoredBox>& preds,
                                            const std::vector<GroundTruthBox>& gts,
                                            double threshold) {
  std::vector<int> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });
  std::vector<bool> gt_taken(gts.size(), false);
  MatchResult out;
  for (int pi : order) {
    int best = -1;
    double best_dist = threshold;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_taken[gi]) continue;
      const double d = bev_distance(preds[pi].box, gts[gi].box);
      if (d < best_dist || (best >= 0 && d == best_dist && static_cast<int>(gi) < best)) {
        best = static_cast<int>(gi);
        best_dist = d;
      }
    }
    if (best >= 0) {
      gt_taken[best] = true;
      out.pairs.push_back({pi, best, best_dist});
    } else {
      out.unmatched_predictions.push_back(pi);
    }
  }
  for (std::size_t gi = 0; gi < gts.size(); ++gi)
    if (!gt_taken[gi]) out.unmatched_ground_truths.push_back(static_cast<int>(gi));
  return out;
}

/// 101-point interpolated AP restricted to recall/precision above 0.1 and
/// normalized by 0.81 (the public benchmark convention).
inline double compute_ap(const std::vector<ScoredBox>& preds,
                         const std::vector<GroundTruthBox>& gts, double threshold) {
  if (gts.empty()) throw NoGroundTruth("compute_ap: AP undefined without ground truth");
  if (preds.empty()) return 0.0;

  std::vector<int> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<bool> gt_taken(gts.size(), false);
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (int pi : order) {
    int best = -1;
    double best_dist = threshold;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_taken[gi]) continue;
      const double d = bev_distance(preds[pi].box, gts[gi].box);
      if (d < best_dist) {
        best = static_cast<int>(gi);
        best_dist = d;
      }
    }
    if (best >= 0) {
      gt_taken[best] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / gts.size());
  }

  double ap_sum = 0.0;
  for (int i = 11; i <= 100; ++i) {
    const double r = i / 100.0;
    double p_interp = 0.0;  // max precision at recall >= r
    for (std::size_t j = 0; j < recall.size(); ++j)
      if (recall[j] >= r - 1e-12) p_interp = std::max(p_interp, precision[j]);
    ap_sum += std::max(0.0, p_interp - 0.1) * 0.01;
  }
  return ap_sum / 0.81;
}

inline double yaw_of(const BoxVec& b) { return std::atan2(b[box::kOri], b[box::kOri + 1]); }

/// IoU of center-aligned, orientation-aligned boxes (pure volume-ratio IoU).
inline double aligned_iou(const BoxVec& a, const BoxVec& b) {
  const double iw = std::min(a[3], b[3]);
  const double il = std::min(a[4], b[4]);
  const double ih = std::min(a[5], b[5]);
  if (iw <= 0 || il <= 0 || ih <= 0) return 0.0;
  const double inter = iw * il * ih;
  const double uni = a[3] * a[4] * a[5] + b[3] * b[4] * b[5] - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline TpErrors compute_tp_errors(const MatchResult& matches,
                                  const std::vector<ScoredBox>& preds,
                                  const std::vector<GroundTruthBox>& gts) {
  TpErrors out;  // defaults are the worst-case 1.0 when nothing matched
  if (matches.pairs.empty()) return out;
  double ate = 0, ase = 0, aoe = 0, ave = 0;
  for (const MatchPair& m : matches.pairs) {
    const BoxVec& p = preds[m.prediction].box;
    const BoxVec& g = gts[m.ground_truth].box;
    ate += m.distance;
    ase += 1.0 - aligned_iou(p, g);
    double dyaw = std::abs(yaw_of(p) - yaw_of(g));
    dyaw = std::fmod(dyaw, 2.0 * M_PI);
    if (dyaw > M_PI) dyaw = 2.0 * M_PI - dyaw;
    aoe += dyaw;
    const double dvx = p[box::kVel] - g[box::kVel];
    const double dvy = p[box::kVel + 1] - g[box::kVel + 1];
    ave += std::sqrt(dvx * dvx + dvy * dvy);
  }
  const double n = static_cast<double>(matches.pairs.size());
  out.mate = ate / n;
  out.mase = ase / n;
  out.maoe = aoe / n;
  out.mave = ave / n;
  return out;
}

/// NDS over this artifact's four TP errors (no attribute channel, so the
/// divisor is 9 instead of the benchmark's 10). Normalizers: mATE/1, mASE/1,
/// mAOE/pi, mAVE/1.
inline double compute_nds(double map, const TpErrors& tp) {
  const double normalized[4] = {tp.mate / 1.0, tp.mase / 1.0, tp.maoe / M_PI, tp.mave / 1.0};
  double score = 5.0 * map;
  for (double e : normalized) score += 1.0 - std::min(1.0, e);
  return score / 9.0;
}

inline const std::vector<double>& ap_thresholds() {
  static const std::vector<double> t = {0.5, 1.0, 2.0, 4.0};
  return t;
}

/// Full report: AP averaged over the distance thresholds (and over classes
/// when several class ids are present), TP errors at the 2 m threshold.
inline MetricsReport evaluate(const std::vector<ScoredBox>& preds,
                              const std::vector<GroundTruthBox>& gts) {
  MetricsReport report;
  if (gts.empty()) throw NoGroundTruth("evaluate: no ground-truth boxes");
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);

  double map_sum = 0.0;
  for (double thr : ap_thresholds()) {
    double ap_class_sum = 0.0;
    for (int cls : classes) {
      std::vector<ScoredBox> cp;
      std::vector<GroundTruthBox> cg;
      for (const auto& p : preds)
        if (p.class_id == cls) cp.push_back(p);
      for (const auto& g : gts)
        if (g.class_id == cls) cg.push_back(g);
      ap_class_sum += cg.empty() ? 0.0 : compute_ap(cp, cg, thr);
    }
    const double ap = ap_class_sum / classes.size();
    report.ap_per_threshold[thr] = ap;
    map_sum += ap;
  }
  report.map = map_sum / ap_thresholds().size();

  const MatchResult matches = match_by_center_distance(preds, gts, 2.0);
  report.tp = compute_tp_errors(matches, preds, gts);
  report.nds = compute_nds(report.map, report.tp);
  return report;
}

}  // namespace lssinst
