#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lssinst/config.hpp"
#include "lssinst/core.hpp"
#include "lssinst/grid_ops.hpp"

namespace lssinst {

/// One named parameter tensor. Data is flat, row-major over `dims`.
struct ParamBlock {
  std::vector<std::int64_t> dims;
  Eigen::VectorXd data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// Named, seeded, serializable stand-in for all learnable weights.
class ParamRegistry {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  bool has(const std::string& name) const { return blocks_.count(name) != 0; }

  ParamBlock& block(const std::string& name) {
    auto it = blocks_.find(name);
    if (it == blocks_.end())
      throw DimensionMismatch("ParamRegistry: no block named '" + name + "'");
    return it->second;
  }
  const ParamBlock& block(const std::string& name) const {
    auto it = blocks_.find(name);
    if (it == blocks_.end())
      throw DimensionMismatch("ParamRegistry: no block named '" + name + "'");
    return it->second;
  }

  void add(const std::string& name, std::vector<std::int64_t> dims) {
    ParamBlock b;
    b.dims = std::move(dims);
    b.data = Eigen::VectorXd::Zero(b.numel());
    blocks_[name] = std::move(b);
  }

  /// Matrix view of a 2-D block (row-major storage).
  Eigen::MatrixXd matrix(const std::string& name) const {
    const ParamBlock& b = block(name);
    if (b.dims.size() != 2)
      throw DimensionMismatch("ParamRegistry: block '" + name + "' is not 2-D");
    Eigen::MatrixXd m(b.dims[0], b.dims[1]);
    for (std::int64_t r = 0; r < b.dims[0]; ++r)
      for (std::int64_t c = 0; c < b.dims[1]; ++c) m(r, c) = b.data[r * b.dims[1] + c];
    return m;
  }

  void set_matrix(const std::string& name, const Eigen::MatrixXd& m) {
    ParamBlock& b = block(name);
    if (b.dims.size() != 2 || b.dims[0] != m.rows() || b.dims[1] != m.cols())
      throw DimensionMismatch("ParamRegistry: shape mismatch storing '" + name + "'");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) b.data[r * m.cols() + c] = m(r, c);
  }

  /// Assembles a LinearMap from "<name>" and, when present, "<name>.bias".
  LinearMap linear(const std::string& name) const {
    LinearMap map;
    map.name = name;
    map.weights = matrix(name);
    const std::string bias_name = name + ".bias";
    if (has(bias_name)) map.bias = block(bias_name).data;
    return map;
  }

  const std::map<std::string, ParamBlock>& blocks() const { return blocks_; }
  std::map<std::string, ParamBlock>& blocks() { return blocks_; }

  void save(const std::string& path) const;
  static ParamRegistry load(const std::string& path);

 private:
  std::map<std::string, ParamBlock> blocks_;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void ParamRegistry::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("ParamRegistry::save: cannot open " + path);
  os.write("PREG", 4);
  detail::put_u32(os, kFormatVersion);
  detail::put_u64(os, blocks_.size());
  for (const auto& [name, b] : blocks_) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(b.dims.size()));
    for (auto d : b.dims) detail::put_u64(os, static_cast<std::uint64_t>(d));
    for (Eigen::Index i = 0; i < b.data.size(); ++i) detail::put_f64(os, b.data[i]);
  }
}

inline ParamRegistry ParamRegistry::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("ParamRegistry::load: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "PREG")
    throw ParseError("ParamRegistry::load: bad magic in " + path);
  const std::uint32_t version = detail::get_u32(is);
  if (version != kFormatVersion)
    throw ParseError("ParamRegistry::load: unsupported format version " +
                     std::to_string(version));
  const std::uint64_t count = detail::get_u64(is);
  ParamRegistry reg;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndims = detail::get_u32(is);
    std::vector<std::int64_t> dims(ndims);
    for (auto& d : dims) d = static_cast<std::int64_t>(detail::get_u64(is));
    reg.add(name, dims);
    ParamBlock& b = reg.block(name);
    for (Eigen::Index j = 0; j < b.data.size(); ++j) b.data[j] = detail::get_f64(is);
    if (!is) throw ParseError("ParamRegistry::load: truncated block '" + name + "'");
  }
  return reg;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Declares every block the pipeline references, with dimensions derived from
/// the config. Data is zero; see init_params for the seeded fill.
inline ParamRegistry build_registry(const RunConfig& cfg) {
  ParamRegistry reg;
  const std::int64_t c = cfg.channels;
  const std::int64_t k = cfg.sample_points;
  const std::int64_t frames = cfg.sample_history + 1;

  auto add_linear = [&reg](const std::string& name, std::int64_t out, std::int64_t in,
                           bool bias) {
    reg.add(name, {out, in});
    if (bias) reg.add(name + ".bias", {out});
  };

  add_linear("bev.depth_head", cfg.depth_bins, c, true);
  add_linear("bev.temporal_reduce", c, c * (cfg.history + 1), true);
  add_linear("proposal.head", 11, c, true);  // score logit + 10 box regressands

  add_linear("adaptor.offset", k * 2, c, true);
  add_linear("adaptor.weight", k, c, true);
  add_linear("adaptor.inner", c, c, false);
  add_linear("adaptor.outer", c, c, false);
  reg.add("adaptor.converter.kernel", {c, c, 3, 3});
  reg.add("adaptor.converter.bn", {4, c});  // rows: mean, var, gamma, beta
  reg.add("adaptor.potential.features", {cfg.num_potential, c});
  reg.add("adaptor.potential.boxes", {cfg.num_potential, 10});

  add_linear("branch.embed.pos", c, 3, false);
  add_linear("branch.embed.sca", c, 3, false);
  add_linear("branch.embed.vel", c, 2, false);
  add_linear("branch.embed.ori", c, 2, false);
  add_linear("branch.embed.global", c, c, false);

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "branch.layer" + std::to_string(l) + ".";
    add_linear(p + "attn.q", c, c, true);
    add_linear(p + "attn.k", c, c, true);
    add_linear(p + "attn.v", c, c, true);
    add_linear(p + "attn.o", c, c, true);
    add_linear(p + "offset", frames * k * 2, c, true);
    add_linear(p + "weight", frames * k, c, true);
    add_linear(p + "inner", c, c, false);
    add_linear(p + "outer", c, c, false);
    add_linear(p + "enc.0", c, 2 * c, true);
    add_linear(p + "enc.1", c, c, true);
    add_linear(p + "enc.2", c, c, true);
    add_linear(p + "reg.0", c, c, true);
    add_linear(p + "reg.1", 10, c, true);
    add_linear(p + "cls", 1, c, true);
  }
  return reg;
}

/// Seeded Gaussian init (std 0.02) for weights, zeros for biases. Potential
/// boxes get uniform positions over the BEV range, unit scale, yaw 0 and zero
/// velocity; BN statistics start as the identity transform. Each block draws
/// from its own stream keyed on (seed, name), so the result is independent of
/// block iteration order.
inline void init_params(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed) {
  for (auto& [name, b] : reg.blocks()) {
    Rng rng(seed ^ detail::fnv1a(name));
    if (name.size() > 5 && name.substr(name.size() - 5) == ".bias") {
      b.data.setZero();
    } else if (name == "adaptor.converter.bn") {
      const std::int64_t c = b.dims[1];
      b.data.setZero();
      b.data.segment(c, c).setOnes();      // var = 1
      b.data.segment(2 * c, c).setOnes();  // gamma = 1
    } else if (name == "adaptor.potential.boxes") {
      const double x0 = cfg.bev.range_min[0];
      const double y0 = cfg.bev.range_min[1];
      const double xs = cfg.bev.grid_width * cfg.bev.cell_size();
      const double ys = cfg.bev.grid_height * cfg.bev.cell_size();
      for (std::int64_t i = 0; i < b.dims[0]; ++i) {
        double* row = b.data.data() + i * 10;
        row[0] = x0 + xs * rng.uniform();
        row[1] = y0 + ys * rng.uniform();
        row[2] = 0.0;
        row[3] = row[4] = row[5] = 1.0;  // unit scale
        row[6] = 0.0;                    // sin(yaw=0)
        row[7] = 1.0;                    // cos(yaw=0)
        row[8] = row[9] = 0.0;
      }
    } else {
      for (Eigen::Index i = 0; i < b.data.size(); ++i) b.data[i] = rng.normal(0.0, 0.02);
    }
  }
}

}  // namespace lssinst
