#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "lssinst/core.hpp"
#include "lssinst/proposal.hpp"

using namespace lssinst;

namespace {

BEVSpec small_spec() {
  BEVSpec spec;
  spec.range_min = {-4.0, -4.0};
  spec.voxel_size = 1.0;
  spec.upsample_factor = 1.0;
  spec.grid_height = 8;
  spec.grid_width = 8;
  return spec;
}

ScoredBox box_at(double x, double y, double score) {
  ScoredBox b;
  b.box[0] = x;
  b.box[1] = y;
  b.score = score;
  return b;
}

/// Independently written O(n^2) greedy suppression used as the NMS oracle.
std::vector<ScoredBox> nms_oracle(std::vector<ScoredBox> cands, double thr, double radius) {
  std::vector<ScoredBox> pool;
  for (const auto& b : cands)
    if (b.score >= thr) pool.push_back(b);
  std::vector<ScoredBox> kept;
  std::vector<bool> used(pool.size(), false);
  while (true) {
    int best = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const ScoredBox& a = pool[i];
      const ScoredBox& c = pool[best];
      const bool wins = a.score > c.score ||
                        (a.score == c.score &&
                         (a.box[0] < c.box[0] ||
                          (a.box[0] == c.box[0] && a.box[1] < c.box[1])));
      if (wins) best = static_cast<int>(i);
    }
    if (best < 0) break;
    used[best] = true;
    bool suppressed = false;
    for (const auto& k : kept) {
      const double dx = pool[best].box[0] - k.box[0];
      const double dy = pool[best].box[1] - k.box[1];
      if (dx * dx + dy * dy < radius * radius) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(pool[best]);
  }
  return kept;
}

}  // namespace

TEST_CASE("score_and_regress: zero head puts boxes at cell centers with score 0.5") {
  BEVGrid bev;
  bev.spec = small_spec();
  bev.grid = FeatureGrid(2, 8, 8);
  bev.grid.data().setRandom();
  LinearMap head{"zero", Eigen::MatrixXd::Zero(11, 2), Eigen::VectorXd::Zero(11)};

  const auto boxes = score_and_regress(bev, head);
  REQUIRE(boxes.size() == 64);
  for (int cy = 0; cy < 8; ++cy) {
    for (int cx = 0; cx < 8; ++cx) {
      const ScoredBox& b = boxes[cy * 8 + cx];
      CHECK(b.score == 0.5);
      CHECK(b.box[0] == doctest::Approx(-4.0 + cx + 0.5));
      CHECK(b.box[1] == doctest::Approx(-4.0 + cy + 0.5));
      CHECK(b.box.tail<8>().cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("score_and_regress: a planted high-logit cell ranks first") {
  BEVGrid bev;
  bev.spec = small_spec();
  bev.grid = FeatureGrid(2, 8, 8);
  bev.grid.at(0, 5, 3) = 10.0;  // planted activation in channel 0

  // Head copies channel 0 into the score logit.
  LinearMap head{"copy", Eigen::MatrixXd::Zero(11, 2), Eigen::VectorXd::Zero(11)};
  head.weights(0, 0) = 1.0;

  const auto boxes = score_and_regress(bev, head);
  const auto best =
      std::max_element(boxes.begin(), boxes.end(),
                       [](const ScoredBox& a, const ScoredBox& b) { return a.score < b.score; });
  const auto idx = static_cast<int>(best - boxes.begin());
  CHECK(idx == 5 * 8 + 3);
  CHECK(best->score > 0.99);
  CHECK(sigmoid(2.0) > sigmoid(1.0));  // score monotone in its logit
}

TEST_CASE("nms_filter: threshold 0.1 drops the 0.05 box") {
  const auto kept = nms_filter({box_at(0, 0, 0.9), box_at(3, 3, 0.05)}, 0.1, 1.0);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms_filter: coincident boxes keep only the higher score") {
  const auto kept = nms_filter({box_at(1, 1, 0.8), box_at(1, 1, 0.9)}, 0.1, 2.0);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms_filter: kept set obeys the radius and threshold invariants") {
  Rng rng(5);
  std::vector<ScoredBox> cands;
  for (int i = 0; i < 60; ++i)
    cands.push_back(box_at(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 1)));
  const auto kept = nms_filter(cands, 0.25, 1.5);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    CHECK(kept[i].score >= 0.25);
    for (std::size_t j = i + 1; j < kept.size(); ++j) {
      const double dx = kept[i].box[0] - kept[j].box[0];
      const double dy = kept[i].box[1] - kept[j].box[1];
      CHECK(dx * dx + dy * dy >= 1.5 * 1.5);
    }
  }
}

TEST_CASE("nms_filter matches the brute-force oracle on 100 random sets") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredBox> cands;
    const int n = 10 + static_cast<int>(rng.uniform(0, 40));
    for (int i = 0; i < n; ++i) {
      // Quantized coordinates/scores exercise the tie-break rules.
      const double x = std::round(rng.uniform(-4, 4) * 2.0) / 2.0;
      const double y = std::round(rng.uniform(-4, 4) * 2.0) / 2.0;
      const double s = std::round(rng.uniform(0, 1) * 10.0) / 10.0;
      cands.push_back(box_at(x, y, s));
    }
    const double thr = 0.2;
    const double radius = rng.uniform(0.5, 2.5);
    const auto got = nms_filter(cands, thr, radius);
    const auto expected = nms_oracle(cands, thr, radius);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].score == expected[i].score);
      CHECK(got[i].box[0] == expected[i].box[0]);
      CHECK(got[i].box[1] == expected[i].box[1]);
    }
  }
}

TEST_CASE("topk_pad: short sets are padded with the blank-box rule") {
  const BEVSpec spec = small_spec();
  const auto set = topk_pad({box_at(0, 0, 0.9), box_at(2, 2, 0.8)}, 3, 11, spec);
  REQUIRE(set.size() == 3);
  CHECK_FALSE(set.padding_mask[0]);
  CHECK_FALSE(set.padding_mask[1]);
  CHECK(set.padding_mask[2]);

  const ScoredBox& pad = set.boxes[2];
  CHECK(pad.box[box::kOri] == 1.0);       // sin(pi/2)
  CHECK(pad.box[box::kOri + 1] == 0.0);   // cos(pi/2)
  CHECK(pad.box.segment<3>(box::kScale).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pad.box.segment<2>(box::kVel).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pad.score == 0.0);
  CHECK(pad.box[0] >= spec.range_min[0]);
  CHECK(pad.box[0] <= spec.range_min[0] + 8.0);
  CHECK(pad.box[1] >= spec.range_min[1]);
  CHECK(pad.box[1] <= spec.range_min[1] + 8.0);
}

TEST_CASE("topk_pad: truncation keeps the k best, deterministic per seed") {
  const BEVSpec spec = small_spec();
  std::vector<ScoredBox> boxes;
  Rng rng(19);
  for (int i = 0; i < 10; ++i)
    boxes.push_back(box_at(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 1)));

  const auto a = topk_pad(boxes, 4, 23, spec);
  REQUIRE(a.size() == 4);
  for (int i = 1; i < 4; ++i) CHECK(a.boxes[i - 1].score >= a.boxes[i].score);
  for (const bool m : a.padding_mask) CHECK_FALSE(m);

  // Same inputs and seed reproduce the set exactly (incl. padded entries).
  const auto b = topk_pad({boxes[0]}, 5, 23, spec);
  const auto c = topk_pad({boxes[0]}, 5, 23, spec);
  REQUIRE(b.size() == c.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK((b.boxes[i].box - c.boxes[i].box).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.boxes[i].score == c.boxes[i].score);
    CHECK(b.padding_mask[i] == c.padding_mask[i]);
  }
  // A different seed moves the padded positions.
  const auto d = topk_pad({boxes[0]}, 5, 24, spec);
  CHECK((b.boxes[4].box.head<2>() - d.boxes[4].box.head<2>()).norm() > 0.0);
}

TEST_CASE("score_and_regress rejects a wrong-shaped head") {
  BEVGrid bev;
  bev.spec = small_spec();
  bev.grid = FeatureGrid(2, 8, 8);
  CHECK_THROWS_AS(
      score_and_regress(bev, LinearMap{"bad", Eigen::MatrixXd::Zero(10, 2), {}}),
      DimensionMismatch);
  CHECK_THROWS_AS(
      score_and_regress(bev, LinearMap{"bad", Eigen::MatrixXd::Zero(11, 3), {}}),
      DimensionMismatch);
}
