#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "lssinst/core.hpp"
#include "lssinst/tensor.hpp"

namespace lssinst {

/// Bilinear interpolation with zero padding outside the grid. `point` is
/// (x, y) in cell units; integer coordinates hit grid nodes exactly.
inline Eigen::VectorXd bilinear_sample(const FeatureGrid& grid, double x, double y) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.channels());
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0;
  const double ay = y - y0;
  const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int i = 0; i < 4; ++i) {
    if (w[i] != 0.0 && grid.in_bounds(xs[i], ys[i])) out += w[i] * grid.column(ys[i], xs[i]);
  }
  return out;
}

inline Eigen::VectorXd bilinear_sample(const FeatureGrid& grid,
                                       const Eigen::Vector2d& point) {
  return bilinear_sample(grid, point.x(), point.y());
}

struct BilinearGradient {
  Eigen::MatrixXd jacobian;  // C x 2, d(sample)/d(x, y)
  bool on_boundary = false;  // within 1e-9 of an integer coordinate
};

/// Analytic spatial Jacobian of bilinear_sample. Undefined exactly on cell
/// boundaries; flagged instead of thrown.
inline BilinearGradient bilinear_gradient(const FeatureGrid& grid, double x, double y) {
  BilinearGradient out;
  out.jacobian = Eigen::MatrixXd::Zero(grid.channels(), 2);
  const double fx = x - std::floor(x);
  const double fy = y - std::floor(y);
  constexpr double eps = 1e-9;
  if (std::min(fx, 1 - fx) < eps || std::min(fy, 1 - fy) < eps) out.on_boundary = true;

  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0;
  const double ay = y - y0;
  auto cell = [&](int cx, int cy) -> Eigen::VectorXd {
    if (grid.in_bounds(cx, cy)) return grid.column(cy, cx);
    return Eigen::VectorXd::Zero(grid.channels());
  };
  const Eigen::VectorXd v00 = cell(x0, y0), v10 = cell(x0 + 1, y0);
  const Eigen::VectorXd v01 = cell(x0, y0 + 1), v11 = cell(x0 + 1, y0 + 1);
  out.jacobian.col(0) = (1 - ay) * (v10 - v00) + ay * (v11 - v01);
  out.jacobian.col(1) = (1 - ax) * (v01 - v00) + ax * (v11 - v10);
  return out;
}

/// Numerically stable softmax; shift-invariant by construction.
inline Eigen::VectorXd softmax_normalize(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

/// Named dense linear layer, optionally biased.
struct LinearMap {
  std::string name;
  Eigen::MatrixXd weights;  // out_dim x in_dim
  Eigen::VectorXd bias;     // size 0 = bias-free

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }

  static LinearMap identity(int dim, std::string name = "identity") {
    return LinearMap{std::move(name), Eigen::MatrixXd::Identity(dim, dim), {}};
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (x.size() != weights.cols())
      throw DimensionMismatch("LinearMap '" + name + "': input size " +
                              std::to_string(x.size()) + " != in_dim " +
                              std::to_string(weights.cols()));
    Eigen::VectorXd y = weights * x;
    if (bias.size() > 0) y += bias;
    return y;
  }

  /// Columnwise application to a C x N block.
  Eigen::MatrixXd apply_cols(const Eigen::MatrixXd& x) const {
    if (x.rows() != weights.cols())
      throw DimensionMismatch("LinearMap '" + name + "': input rows " +
                              std::to_string(x.rows()) + " != in_dim " +
                              std::to_string(weights.cols()));
    Eigen::MatrixXd y = weights * x;
    if (bias.size() > 0) y.colwise() += bias;
    return y;
  }
};

/// N query points with K offsets and normalized weights each, in cell units.
struct SamplingPattern {
  Eigen::MatrixXd base_points;          // N x 2
  std::vector<Eigen::MatrixXd> offsets; // per query: K x 2
  Eigen::MatrixXd weights;              // N x K, rows sum to 1

  int num_queries() const { return static_cast<int>(base_points.rows()); }
  int num_points() const { return static_cast<int>(weights.cols()); }

  static SamplingPattern from_logits(const Eigen::MatrixXd& base_points,
                                     const std::vector<Eigen::MatrixXd>& offsets,
                                     const Eigen::MatrixXd& logits) {
    SamplingPattern p{base_points, offsets, Eigen::MatrixXd(logits.rows(), logits.cols())};
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      p.weights.row(i) = softmax_normalize(logits.row(i).transpose()).transpose();
    return p;
  }
};

/// outer( sum_k w_ik * inner( bilinear(grid, base_i + offset_ik) ) ) per query.
inline Eigen::MatrixXd deformable_aggregate(const FeatureGrid& grid,
                                            const SamplingPattern& pattern,
                                            const LinearMap& inner, const LinearMap& outer) {
  if (inner.in_dim() != grid.channels())
    throw DimensionMismatch("deformable_aggregate: inner map expects " +
                            std::to_string(inner.in_dim()) + " channels, grid has " +
                            std::to_string(grid.channels()));
  if (outer.in_dim() != inner.out_dim())
    throw DimensionMismatch("deformable_aggregate: outer.in_dim != inner.out_dim");
  const int n = pattern.num_queries();
  const int k = pattern.num_points();
  Eigen::MatrixXd out(n, outer.out_dim());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(inner.out_dim());
    for (int j = 0; j < k; ++j) {
      const double x = pattern.base_points(i, 0) + pattern.offsets[i](j, 0);
      const double y = pattern.base_points(i, 1) + pattern.offsets[i](j, 1);
      acc += pattern.weights(i, j) * inner.apply(bilinear_sample(grid, x, y));
    }
    out.row(i) = outer.apply(acc).transpose();
  }
  return out;
}

/// Exact (erf-based) GeLU.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

enum class Activation { None, Gelu };

struct MlpLayer {
  LinearMap map;
  Activation activation = Activation::None;
};

using MlpSpec = std::vector<MlpLayer>;

inline Eigen::VectorXd mlp_apply(const MlpSpec& spec, const Eigen::VectorXd& x) {
  Eigen::VectorXd h = x;
  for (const auto& layer : spec) {
    h = layer.map.apply(h);
    if (layer.activation == Activation::Gelu)
      h = h.unaryExpr([](double v) { return gelu(v); });
  }
  return h;
}

/// Single-layer multi-head self-attention parameters; all maps are C x C.
struct AttentionParams {
  LinearMap query, key, value, output;
  int heads = 8;
};

/// Multi-head scaled-dot-product self-attention over N tokens with a residual
/// connection. `positional` is added to queries and keys only.
inline Eigen::MatrixXd self_attention(const Eigen::MatrixXd& tokens,
                                      const Eigen::MatrixXd& positional,
                                      const AttentionParams& params) {
  const Eigen::Index n = tokens.rows();
  const Eigen::Index c = tokens.cols();
  if (n < 1 || positional.rows() != n || positional.cols() != c)
    throw DimensionMismatch("self_attention: tokens/positional shape mismatch");
  if (params.heads <= 0 || c % params.heads != 0)
    throw HeadsMismatch("self_attention: channels " + std::to_string(c) +
                        " not divisible by heads " + std::to_string(params.heads));
  const Eigen::Index hd = c / params.heads;

  const Eigen::MatrixXd qk_in = tokens + positional;
  const Eigen::MatrixXd q = params.query.apply_cols(qk_in.transpose()).transpose();
  const Eigen::MatrixXd k = params.key.apply_cols(qk_in.transpose()).transpose();
  const Eigen::MatrixXd v = params.value.apply_cols(tokens.transpose()).transpose();

  Eigen::MatrixXd mixed(n, c);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int h = 0; h < params.heads; ++h) {
    const auto qh = q.middleCols(h * hd, hd);
    const auto kh = k.middleCols(h * hd, hd);
    const auto vh = v.middleCols(h * hd, hd);
    Eigen::MatrixXd scores = scale * (qh * kh.transpose());  // N x N
    for (Eigen::Index i = 0; i < n; ++i)
      scores.row(i) = softmax_normalize(scores.row(i).transpose()).transpose();
    mixed.middleCols(h * hd, hd) = scores * vh;
  }
  return tokens + params.output.apply_cols(mixed.transpose()).transpose();
}

}  // namespace lssinst
