#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "lssinst/core.hpp"

namespace lssinst {

/// Dense C x H x W feature map. Storage is a C x (H*W) matrix; spatial cell
/// (x, y) lives in column y*W + x, so a channel slice is a row and a spatial
/// sample is a column read.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width),
        data_(Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(height) * width)) {}

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int c, int y, int x) { return data_(c, static_cast<Eigen::Index>(y) * width_ + x); }
  double at(int c, int y, int x) const {
    return data_(c, static_cast<Eigen::Index>(y) * width_ + x);
  }

  Eigen::VectorXd column(int y, int x) const {
    return data_.col(static_cast<Eigen::Index>(y) * width_ + x);
  }
  void set_column(int y, int x, const Eigen::VectorXd& v) {
    data_.col(static_cast<Eigen::Index>(y) * width_ + x) = v;
  }

  Eigen::MatrixXd& data() { return data_; }
  const Eigen::MatrixXd& data() const { return data_; }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  int frame = 0;
  int view = 0;
  int scale = 0;

 private:
  int channels_ = 0, height_ = 0, width_ = 0;
  Eigen::MatrixXd data_;
};

namespace detail {

inline void put_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  const char buf[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff),
                       static_cast<char>((bits >> 24) & 0xff)};
  os.write(buf, 4);
}

inline float get_f32_le(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  const std::uint32_t bits = static_cast<std::uint32_t>(buf[0]) |
                             (static_cast<std::uint32_t>(buf[1]) << 8) |
                             (static_cast<std::uint32_t>(buf[2]) << 16) |
                             (static_cast<std::uint32_t>(buf[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

// FGRD blob: ASCII header "FGRD\n" + "C H W\n", then C*H*W little-endian
// float32, row-major with C outermost, then H, then W.

inline void save_fgrd(std::ostream& os, const FeatureGrid& g) {
  os << "FGRD\n" << g.channels() << ' ' << g.height() << ' ' << g.width() << '\n';
  for (int c = 0; c < g.channels(); ++c)
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x)
        detail::put_f32_le(os, static_cast<float>(g.at(c, y, x)));
}

inline void save_fgrd(const std::string& path, const FeatureGrid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("save_fgrd: cannot open " + path);
  save_fgrd(os, g);
}

inline FeatureGrid load_fgrd(std::istream& is) {
  std::string magic;
  std::getline(is, magic);
  if (magic != "FGRD") throw ParseError("load_fgrd: bad magic, expected FGRD");
  std::string dims;
  std::getline(is, dims);
  std::istringstream ds(dims);
  int c = 0, h = 0, w = 0;
  if (!(ds >> c >> h >> w) || c <= 0 || h <= 0 || w <= 0)
    throw ParseError("load_fgrd: bad dims line '" + dims + "'");
  FeatureGrid g(c, h, w);
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) g.at(ci, y, x) = detail::get_f32_le(is);
  if (!is) throw ParseError("load_fgrd: truncated data section");
  return g;
}

inline FeatureGrid load_fgrd(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("load_fgrd: cannot open " + path);
  return load_fgrd(is);
}

}  // namespace lssinst
