#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evinc/error.hpp"

namespace evinc {

using PlaneArray = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneMap = Eigen::Map<PlaneArray>;
using ConstPlaneMap = Eigen::Map<const PlaneArray>;

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t plane_size() const { return std::size_t(height) * std::size_t(width); }
  std::size_t size() const { return std::size_t(channels) * plane_size(); }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Channel-planar float32 tensor (C outer, then rows, then columns).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(int channels, int height, int width) : Tensor(Shape{channels, height, width}) {}
  Tensor(Shape shape, Eigen::ArrayXf values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return shape_.size(); }

  float& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  float operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  Eigen::ArrayXf& array() { return data_; }
  const Eigen::ArrayXf& array() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float* plane_data(int c) { return data_.data() + std::size_t(c) * shape_.plane_size(); }
  const float* plane_data(int c) const { return data_.data() + std::size_t(c) * shape_.plane_size(); }
  PlaneMap plane(int c) { return PlaneMap(plane_data(c), shape_.height, shape_.width); }
  ConstPlaneMap plane(int c) const { return ConstPlaneMap(plane_data(c), shape_.height, shape_.width); }

  void set_zero() { data_.setZero(); }

 private:
  std::size_t index(int c, int y, int x) const {
    return (std::size_t(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_;
  Eigen::ArrayXf data_;
};

/// Max |a - b| over all elements. Shapes must agree.
float max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

struct TileShape {
  int h = 6;
  int w = 6;

  friend bool operator==(const TileShape&, const TileShape&) = default;
};

void validate(const TileShape& tile);

/// One flag per (channel, tile-row, tile-col). A false entry guarantees the
/// covered region of the paired tensor is exactly zero; true means "may be
/// nonzero". Boundary tiles cover the partial remainder.
class TileMask {
 public:
  TileMask() = default;
  TileMask(Shape tensor_shape, TileShape tile, bool value = false);

  const Shape& tensor_shape() const { return shape_; }
  const TileShape& tile() const { return tile_; }
  int channels() const { return shape_.channels; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }

  bool operator()(int c, int i, int j) const { return bits_[index(c, i, j)] != 0; }
  void set(int c, int i, int j, bool v = true) { bits_[index(c, i, j)] = v ? 1 : 0; }
  void fill(bool v);

  // Pixel extent of tile row i / tile col j, clipped to the tensor.
  int row_begin(int i) const { return i * tile_.h; }
  int row_end(int i) const { return std::min((i + 1) * tile_.h, shape_.height); }
  int col_begin(int j) const { return j * tile_.w; }
  int col_end(int j) const { return std::min((j + 1) * tile_.w, shape_.width); }

  std::size_t count_true() const;
  double false_fraction() const;
  bool any() const { return count_true() != 0; }
  bool channel_any(int c) const;

  // Shape-compatible for elementwise combination.
  bool compatible(const TileMask& other) const { return shape_ == other.shape_ && tile_ == other.tile_; }

  TileMask& operator|=(const TileMask& other);
  friend bool operator==(const TileMask&, const TileMask&) = default;

  const std::vector<std::uint8_t>& bits() const { return bits_; }

 private:
  std::size_t index(int c, int i, int j) const { return (std::size_t(c) * rows_ + i) * cols_ + j; }

  Shape shape_;
  TileShape tile_;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline int tile_count(int extent, int tile) { return (extent + tile - 1) / tile; }

/// Exact mask: entry is true iff the tile holds at least one nonzero.
TileMask make_tile_mask(const Tensor& t, TileShape tile);
TileMask mask_or(const TileMask& a, const TileMask& b);

/// Dense-stored increment values with a sound tile mask.
struct IncrementTensor {
  Tensor values;
  TileMask mask;

  IncrementTensor() = default;
  IncrementTensor(Tensor v, TileMask m);

  static IncrementTensor zeros(Shape shape, TileShape tile);
  /// Masks `v` exactly with make_tile_mask.
  static IncrementTensor from_values(Tensor v, TileShape tile);

  const Shape& shape() const { return values.shape(); }
  const TileShape& tile() const { return mask.tile(); }
  /// True iff every false tile of the mask covers only zeros.
  bool is_sound() const;
};

/// dense + incr, touching only the tiles flagged in incr.mask.
Tensor integrate(const Tensor& dense, const IncrementTensor& incr);
void integrate_inplace(Tensor& dense, const IncrementTensor& incr);

/// Convolution filter bank, (C_out, C_in, K_h, K_w) row-major.
class ConvFilter {
 public:
  ConvFilter() = default;
  ConvFilter(int out_channels, int in_channels, int kernel_h, int kernel_w);
  ConvFilter(int out_channels, int in_channels, int kernel_h, int kernel_w, Eigen::ArrayXf values);

  int out_channels() const { return out_; }
  int in_channels() const { return in_; }
  int kernel_h() const { return kh_; }
  int kernel_w() const { return kw_; }

  float& operator()(int co, int ci, int ky, int kx) { return data_[index(co, ci, ky, kx)]; }
  float operator()(int co, int ci, int ky, int kx) const { return data_[index(co, ci, ky, kx)]; }
  Eigen::ArrayXf& array() { return data_; }
  const Eigen::ArrayXf& array() const { return data_; }

 private:
  std::size_t index(int co, int ci, int ky, int kx) const {
    return ((std::size_t(co) * in_ + ci) * kh_ + ky) * kw_ + kx;
  }

  int out_ = 0, in_ = 0, kh_ = 0, kw_ = 0;
  Eigen::ArrayXf data_;
};

struct ConvParams {
  int stride = 1;
  int padding = 0;
};

int conv_output_extent(int extent, int kernel, const ConvParams& p);
Shape conv_output_shape(const Shape& in, const ConvFilter& f, const ConvParams& p);

/// Dense cross-correlation with zero padding. `bias` may be empty (no bias).
Tensor dense_conv2d(const Tensor& x, const ConvFilter& filter, const Eigen::VectorXf& bias,
                    const ConvParams& params);

}  // namespace evinc
