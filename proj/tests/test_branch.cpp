#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "lssinst/branch.hpp"
#include "lssinst/core.hpp"
#include "lssinst/scene.hpp"

using namespace lssinst;

namespace {

LinearMap zero_linear(int out, int in, bool bias = true) {
  return LinearMap{"zero", Eigen::MatrixXd::Zero(out, in),
                   bias ? Eigen::VectorXd(Eigen::VectorXd::Zero(out)) : Eigen::VectorXd()};
}

LinearMap random_linear(int out, int in, std::uint64_t seed, bool bias = true) {
  Rng rng(seed);
  LinearMap m{"rand", Eigen::MatrixXd(out, in), {}};
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) m.weights(r, c) = rng.uniform(-1, 1);
  if (bias) {
    m.bias.resize(out);
    for (int r = 0; r < out; ++r) m.bias[r] = rng.uniform(-1, 1);
  }
  return m;
}

/// Linear encoder mapping (a, b) in R^{2C} to a + b: the "sum of halves".
MlpSpec sum_of_halves(int c) {
  Eigen::MatrixXd w(c, 2 * c);
  w << Eigen::MatrixXd::Identity(c, c), Eigen::MatrixXd::Identity(c, c);
  return {{LinearMap{"sum_halves", w, {}}, Activation::None}};
}

/// One camera looking along +x; an object at camera height on the optical
/// axis projects to the principal point at any depth.
struct AxisScene {
  std::vector<CameraModeld> rig;
  std::vector<EgoPosed> poses;
  SyntheticScene scene;
  std::vector<std::vector<FeatureGrid>> features;  // [frame][view]
};

AxisScene make_axis_scene(int frames, const Eigen::Vector2d& velocity) {
  AxisScene out;
  out.scene.rig = make_surround_rig(1, 60.0, 33, 33, 1.6);
  out.scene.channels = 3;
  out.scene.feat_height = 33;
  out.scene.feat_width = 33;
  out.scene.tau = 0.5;
  out.scene.blob_sigma_px = 3.0;
  for (int t = 0; t < frames; ++t) {
    EgoPosed pose;
    pose.timestamp = -0.5 * t;
    out.scene.poses.push_back(pose);  // static ego
  }
  ObjectTrack obj;
  obj.position = {10.0, 0.0, 1.6};
  obj.velocity = velocity;
  obj.signature_channel = 1;
  out.scene.tracks.push_back(obj);

  out.rig = out.scene.rig;
  out.poses = out.scene.poses;
  for (int t = 0; t < frames; ++t) out.features.push_back(render_features(out.scene, t));
  return out;
}

SpatiotemporalParams degenerate_sampling(int c, int k, int t_chi) {
  SpatiotemporalParams p;
  p.offset_head = zero_linear((t_chi + 1) * k * 2, c);
  p.weight_head = zero_linear((t_chi + 1) * k, c);
  p.inner = LinearMap::identity(c);
  p.outer = LinearMap::identity(c);
  p.sample_points = k;
  p.sample_history = t_chi;
  p.tau = 0.5;
  return p;
}

}  // namespace

TEST_CASE("partition_box: column slices, degenerate orientation, round trip") {
  Eigen::MatrixXd boxes(2, 10);
  boxes.row(0) << 1, 2, 3, 4, 5, 6, 0.6, 0.8, 9, 10;
  boxes.row(1).setZero();  // degenerate orientation

  const BoxPartition parts = partition_box(boxes);
  CHECK((parts.position.row(0) - Eigen::RowVector3d(1, 2, 3)).norm() == 0.0);
  CHECK((parts.scale.row(0) - Eigen::RowVector3d(4, 5, 6)).norm() == 0.0);
  CHECK((parts.velocity.row(0) - Eigen::RowVector2d(9, 10)).norm() == 0.0);
  CHECK((parts.orientation.row(0) - Eigen::RowVector2d(0.6, 0.8)).norm() < 1e-12);
  CHECK_FALSE(parts.degenerate_orientation[0]);
  CHECK(parts.degenerate_orientation[1]);
  CHECK((parts.orientation.row(1) - Eigen::RowVector2d(0, 1)).norm() == 0.0);

  const Eigen::MatrixXd back = reassemble_box(parts);
  CHECK((back.row(0) - boxes.row(0)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(partition_box(Eigen::MatrixXd::Zero(2, 9)), DimensionMismatch);
}

TEST_CASE("partition_box renormalizes orientation rows to unit norm") {
  Rng rng(7);
  Eigen::MatrixXd boxes(20, 10);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 10; ++j) boxes(i, j) = rng.uniform(-3, 3);
  const BoxPartition parts = partition_box(boxes);
  for (int i = 0; i < 20; ++i)
    CHECK(parts.orientation.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("embed_box: bias-free linearity gives zero-box-zero and additivity") {
  const int c = 5;
  BoxEmbedParams params{random_linear(c, 3, 11, false), random_linear(c, 3, 12, false),
                        random_linear(c, 2, 13, false), random_linear(c, 2, 14, false),
                        random_linear(c, c, 15, false)};

  BoxPartition zero;
  zero.position = Eigen::MatrixXd::Zero(1, 3);
  zero.scale = Eigen::MatrixXd::Zero(1, 3);
  zero.velocity = Eigen::MatrixXd::Zero(1, 2);
  zero.orientation = Eigen::MatrixXd::Zero(1, 2);
  CHECK(embed_box(zero, params).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(16);
  auto random_parts = [&](int n) {
    BoxPartition p;
    p.position = Eigen::MatrixXd::Random(n, 3);
    p.scale = Eigen::MatrixXd::Random(n, 3);
    p.velocity = Eigen::MatrixXd::Random(n, 2);
    p.orientation = Eigen::MatrixXd::Random(n, 2);
    return p;
  };
  const BoxPartition a = random_parts(4);
  const BoxPartition b = random_parts(4);
  BoxPartition ab;
  ab.position = a.position + b.position;
  ab.scale = a.scale + b.scale;
  ab.velocity = a.velocity + b.velocity;
  ab.orientation = a.orientation + b.orientation;
  CHECK((embed_box(ab, params) - embed_box(a, params) - embed_box(b, params))
            .cwiseAbs()
            .maxCoeff() < 1e-8);
}

TEST_CASE("embed_box matches the explicit five-matrix oracle") {
  const int c = 4, n = 3;
  BoxEmbedParams params{random_linear(c, 3, 21, false), random_linear(c, 3, 22, false),
                        random_linear(c, 2, 23, false), random_linear(c, 2, 24, false),
                        random_linear(c, c, 25, false)};
  BoxPartition parts;
  parts.position = Eigen::MatrixXd::Random(n, 3);
  parts.scale = Eigen::MatrixXd::Random(n, 3);
  parts.velocity = Eigen::MatrixXd::Random(n, 2);
  parts.orientation = Eigen::MatrixXd::Random(n, 2);

  const Eigen::MatrixXd got = embed_box(parts, params);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd local = params.position.weights * parts.position.row(i).transpose() +
                                  params.scale.weights * parts.scale.row(i).transpose() +
                                  params.velocity.weights * parts.velocity.row(i).transpose() +
                                  params.orientation.weights * parts.orientation.row(i).transpose();
    const Eigen::VectorXd expected = params.global.weights * local;
    CHECK((got.row(i).transpose() - expected).norm() < 1e-9);
  }
}

TEST_CASE("spatiotemporal_sample: frozen world gives time-invariant features") {
  AxisScene axis = make_axis_scene(4, {0.0, 0.0});  // static object, static ego
  const int c = 3;
  const SpatiotemporalParams params = degenerate_sampling(c, 2, 3);

  Eigen::MatrixXd queries = Eigen::MatrixXd::Zero(1, c);
  Eigen::MatrixXd boxes(1, 10);
  boxes << 10, 0, 1.6, 1, 1, 1, 0, 1, 0, 0;
  const BoxPartition parts = partition_box(boxes);

  const SampledFeatureStack stack =
      spatiotemporal_sample(axis.features, queries, parts, axis.rig, axis.poses, params);
  REQUIRE(stack.per_frame.size() == 4);
  for (int t = 0; t <= 3; ++t) {
    CHECK(stack.validity[t][0]);
    CHECK((stack.per_frame[t] - stack.per_frame[0]).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("spatiotemporal_sample: degenerate single-view K=1 case reads one pixel") {
  AxisScene axis = make_axis_scene(1, {0.0, 0.0});
  const int c = 3;
  SpatiotemporalParams params = degenerate_sampling(c, 1, 0);
  params.inner = random_linear(c, c, 31, false);
  params.outer = random_linear(c, c, 32, false);

  Eigen::MatrixXd queries = Eigen::MatrixXd::Zero(1, c);
  Eigen::MatrixXd boxes(1, 10);
  boxes << 10, 0, 1.6, 1, 1, 1, 0, 1, 0, 0;
  const BoxPartition parts = partition_box(boxes);

  const SampledFeatureStack stack =
      spatiotemporal_sample(axis.features, queries, parts, axis.rig, axis.poses, params);
  const auto proj = project_point(axis.rig[0], Eigen::Vector3d(10, 0, 1.6));
  REQUIRE(proj.has_value());
  const Eigen::VectorXd expected =
      params.outer.weights *
      (params.inner.weights * bilinear_sample(axis.features[0][0], proj->u, proj->v));
  CHECK((stack.per_frame[0].row(0).transpose() - expected).norm() < 1e-8);
}

TEST_CASE("spatiotemporal_sample: constant-velocity compensation tracks the planted blob") {
  // Object at camera height moving along the optical axis: its blob sits at
  // the principal point of every frame, so the compensated read is identical.
  AxisScene axis = make_axis_scene(4, {3.0, 0.0});
  const int c = 3;
  const SpatiotemporalParams params = degenerate_sampling(c, 1, 3);

  Eigen::MatrixXd queries = Eigen::MatrixXd::Zero(1, c);
  Eigen::MatrixXd boxes(1, 10);
  boxes << 10, 0, 1.6, 1, 1, 1, 0, 1, 3, 0;  // ground-truth pose and velocity
  const BoxPartition parts = partition_box(boxes);

  const SampledFeatureStack stack =
      spatiotemporal_sample(axis.features, queries, parts, axis.rig, axis.poses, params);
  for (int t = 0; t <= 3; ++t) {
    REQUIRE(stack.validity[t][0]);
    CHECK(stack.per_frame[t](0, 1) == doctest::Approx(1.0).epsilon(1e-5));  // blob peak
    CHECK((stack.per_frame[t] - stack.per_frame[0]).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("spatiotemporal_sample: invisible queries get zero features, errors throw") {
  AxisScene axis = make_axis_scene(1, {0.0, 0.0});
  const int c = 3;
  SpatiotemporalParams params = degenerate_sampling(c, 1, 0);

  Eigen::MatrixXd queries = Eigen::MatrixXd::Zero(1, c);
  Eigen::MatrixXd boxes(1, 10);
  boxes << -10, 0, 1.6, 1, 1, 1, 0, 1, 0, 0;  // behind the single forward camera
  const BoxPartition parts = partition_box(boxes);
  const SampledFeatureStack stack =
      spatiotemporal_sample(axis.features, queries, parts, axis.rig, axis.poses, params);
  CHECK_FALSE(stack.validity[0][0]);
  CHECK(stack.per_frame[0].cwiseAbs().maxCoeff() == 0.0);

  params.sample_history = 2;  // more history than supplied frames
  CHECK_THROWS_AS(
      spatiotemporal_sample(axis.features, queries, parts, axis.rig, axis.poses, params),
      NoHistory);
}

TEST_CASE("temporal_fuse: single-frame stack passes through untouched") {
  SampledFeatureStack stack;
  stack.per_frame = {Eigen::MatrixXd::Random(3, 4)};
  stack.validity = {std::vector<bool>(3, true)};
  const Eigen::MatrixXd out = temporal_fuse(stack, 0.6, sum_of_halves(4));
  CHECK((out - stack.per_frame[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("temporal_fuse: linear collapse yields the lambda-power coefficients") {
  const int c = 4, n = 2;
  SampledFeatureStack stack;
  for (int t = 0; t < 4; ++t) {
    stack.per_frame.push_back(Eigen::MatrixXd::Random(n, c));
    stack.validity.push_back(std::vector<bool>(n, true));
  }
  const double lambda = 0.6;
  const Eigen::MatrixXd out = temporal_fuse(stack, lambda, sum_of_halves(c));

  // Coefficients 1, 0.6, 0.36, 0.216 from unrolling the recurrence.
  const Eigen::MatrixXd expected = stack.per_frame[0] + lambda * stack.per_frame[1] +
                                   lambda * lambda * stack.per_frame[2] +
                                   lambda * lambda * lambda * stack.per_frame[3];
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("temporal_fuse: random MLP encoder matches the step-by-step oracle") {
  const int c = 3, n = 2;
  SampledFeatureStack stack;
  for (int t = 0; t < 3; ++t) {
    stack.per_frame.push_back(Eigen::MatrixXd::Random(n, c));
    stack.validity.push_back(std::vector<bool>(n, true));
  }
  const MlpSpec enc = {{random_linear(c, 2 * c, 41), Activation::Gelu},
                       {random_linear(c, c, 42), Activation::None}};
  const double lambda = 0.37;
  const Eigen::MatrixXd out = temporal_fuse(stack, lambda, enc);

  std::vector<Eigen::MatrixXd> f = stack.per_frame;
  for (int t = 2; t >= 1; --t) {
    Eigen::MatrixXd fused(n, c);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd cat(2 * c);
      cat.head(c) = f[t - 1].row(i).transpose();
      cat.tail(c) = lambda * f[t].row(i).transpose();
      fused.row(i) = mlp_apply(enc, cat).transpose();
    }
    f[t - 1] = fused;
  }
  CHECK((out - f[0]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("temporal_fuse: lambda range and empty-stack errors") {
  SampledFeatureStack stack;
  stack.per_frame = {Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 2)};
  stack.validity = {std::vector<bool>(1, true), std::vector<bool>(1, true)};
  const MlpSpec enc = sum_of_halves(2);
  CHECK_THROWS_AS(temporal_fuse(stack, 0.0, enc), LambdaOutOfRange);
  CHECK_THROWS_AS(temporal_fuse(stack, 1.0, enc), LambdaOutOfRange);
  CHECK_THROWS_AS(temporal_fuse(stack, 1.5, enc), LambdaOutOfRange);
  CHECK_THROWS_AS(temporal_fuse(SampledFeatureStack{}, 0.5, enc), NoHistory);
}

TEST_CASE("refine_layer: zero head leaves boxes, residual still updates features") {
  const int c = 3, n = 2;
  SparseQuerySet queries;
  queries.features = Eigen::MatrixXd::Random(n, c);
  queries.boxes = Eigen::MatrixXd::Random(n, 10);
  queries.boxes.col(box::kOri).setConstant(0.6);
  queries.boxes.col(box::kOri + 1).setConstant(0.8);
  queries.provenance.assign(n, Provenance::Proposal);
  const Eigen::MatrixXd boxes_before = queries.boxes;
  const Eigen::MatrixXd feats_before = queries.features;
  const Eigen::MatrixXd f_delta = Eigen::MatrixXd::Random(n, c);

  RefineParams params;
  params.regression = {{zero_linear(10, c), Activation::None}};
  params.eta = 3.0;
  refine_layer(queries, Eigen::MatrixXd::Zero(n, c), f_delta, params);
  CHECK((queries.boxes - boxes_before).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((queries.features - feats_before - 3.0 * f_delta).cwiseAbs().maxCoeff() < 1e-12);

  // Zero residual and zero head: a full no-op.
  refine_layer(queries, Eigen::MatrixXd::Zero(n, c), Eigen::MatrixXd::Zero(n, c), params);
  CHECK((queries.boxes - boxes_before).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("refine_layer matches the explicit-arithmetic oracle") {
  const int c = 4, n = 3;
  SparseQuerySet queries;
  queries.features = Eigen::MatrixXd::Random(n, c);
  queries.boxes = Eigen::MatrixXd::Random(n, 10);
  queries.provenance.assign(n, Provenance::Potential);
  const Eigen::MatrixXd embedding = Eigen::MatrixXd::Random(n, c);
  const Eigen::MatrixXd f_delta = Eigen::MatrixXd::Random(n, c);

  RefineParams params;
  params.regression = {{random_linear(c, c, 51), Activation::Gelu},
                       {random_linear(10, c, 52), Activation::None}};
  params.eta = 2.5;

  SparseQuerySet expected = queries;
  expected.features += params.eta * f_delta;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd delta =
        mlp_apply(params.regression, (expected.features.row(i) + embedding.row(i)).transpose());
    expected.boxes.row(i) += delta.transpose();
    expected.boxes.row(i).segment(box::kOri, 2).normalize();
  }

  refine_layer(queries, embedding, f_delta, params);
  CHECK((queries.features - expected.features).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((queries.boxes - expected.boxes).cwiseAbs().maxCoeff() < 1e-8);
  for (int i = 0; i < n; ++i)
    CHECK(queries.boxes.row(i).segment(box::kOri, 2).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("decode: one all-zero layer returns the input boxes at score 0.5") {
  AxisScene axis = make_axis_scene(1, {0.0, 0.0});
  const int c = 3, n = 3;

  SparseQuerySet queries;
  queries.features = Eigen::MatrixXd::Random(n, c);
  queries.boxes = Eigen::MatrixXd::Random(n, 10);
  queries.boxes.col(box::kOri).setConstant(1.0);
  queries.boxes.col(box::kOri + 1).setConstant(0.0);
  queries.provenance = {Provenance::Proposal, Provenance::Proposal, Provenance::Potential};
  const Eigen::MatrixXd boxes_before = queries.boxes;

  DecoderLayerParams layer;
  layer.attention = {zero_linear(c, c), zero_linear(c, c), zero_linear(c, c),
                     zero_linear(c, c), 1};
  layer.sampling = degenerate_sampling(c, 1, 0);
  layer.sampling.inner = zero_linear(c, c, false);
  layer.sampling.outer = zero_linear(c, c, false);
  layer.temporal_encoder = {{zero_linear(c, 2 * c), Activation::None}};
  layer.refine.regression = {{zero_linear(10, c), Activation::None}};
  layer.refine.eta = 3.0;
  layer.classifier = zero_linear(1, c);

  DecoderParams params;
  params.embedding = BoxEmbedParams{zero_linear(c, 3, false), zero_linear(c, 3, false),
                                    zero_linear(c, 2, false), zero_linear(c, 2, false),
                                    zero_linear(c, c, false)};
  params.layers = {layer};
  params.lambda = 0.6;
  params.out_box_num = 300;

  const auto dets = decode(queries, axis.features, axis.rig, axis.poses, params);
  REQUIRE(static_cast<int>(dets.size()) == n);
  for (int i = 0; i < n; ++i) {
    CHECK(dets[i].box.score == 0.5);
    CHECK((dets[i].box.box - boxes_before.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Stable sort on equal scores preserves query order, provenance intact.
  CHECK(dets[0].provenance == Provenance::Proposal);
  CHECK(dets[2].provenance == Provenance::Potential);

  params.out_box_num = 2;
  const auto truncated = decode(queries, axis.features, axis.rig, axis.poses, params);
  CHECK(truncated.size() == 2);

  params.layers.clear();
  CHECK_THROWS_AS(decode(queries, axis.features, axis.rig, axis.poses, params),
                  DimensionMismatch);
}
