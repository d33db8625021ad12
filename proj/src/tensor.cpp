#include "evinc/tensor.hpp"

#include <cmath>
#include <sstream>

#include "detail.hpp"

namespace evinc {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.channels << "x" << s.height << "x" << s.width;
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(shape) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0)
    throw ShapeError("negative tensor dimension: " + to_string(shape));
  data_ = Eigen::ArrayXf::Zero(Eigen::Index(shape.size()));
}

Tensor::Tensor(Shape shape, Eigen::ArrayXf values) : shape_(shape), data_(std::move(values)) {
  if (std::size_t(data_.size()) != shape.size())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (a.size() == 0) return 0.0f;
  return (a.array() - b.array()).abs().maxCoeff();
}

bool all_finite(const Tensor& t) { return t.array().isFinite().all(); }

void validate(const TileShape& tile) {
  if (tile.h < 1 || tile.w < 1)
    throw ShapeError("tile dimensions must be >= 1, got " + std::to_string(tile.h) + "x" +
                     std::to_string(tile.w));
}

TileMask::TileMask(Shape tensor_shape, TileShape tile, bool value) : shape_(tensor_shape), tile_(tile) {
  validate(tile);
  rows_ = tile_count(shape_.height, tile.h);
  cols_ = tile_count(shape_.width, tile.w);
  bits_.assign(std::size_t(shape_.channels) * rows_ * cols_, value ? 1 : 0);
}

void TileMask::fill(bool v) { std::fill(bits_.begin(), bits_.end(), v ? 1 : 0); }

std::size_t TileMask::count_true() const {
  return std::size_t(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double TileMask::false_fraction() const {
  if (bits_.empty()) return 1.0;
  return 1.0 - double(count_true()) / double(bits_.size());
}

bool TileMask::channel_any(int c) const {
  auto first = bits_.begin() + std::ptrdiff_t(std::size_t(c) * rows_ * cols_);
  return std::any_of(first, first + rows_ * cols_, [](std::uint8_t b) { return b != 0; });
}

TileMask& TileMask::operator|=(const TileMask& other) {
  if (!compatible(other)) throw ShapeError("mask_or: incompatible tile masks");
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

TileMask make_tile_mask(const Tensor& t, TileShape tile) {
  TileMask mask(t.shape(), tile);
  for (int c = 0; c < t.channels(); ++c) {
    auto plane = t.plane(c);
    for (int i = 0; i < mask.rows(); ++i) {
      const int r0 = mask.row_begin(i), r1 = mask.row_end(i);
      for (int j = 0; j < mask.cols(); ++j) {
        const int c0 = mask.col_begin(j), c1 = mask.col_end(j);
        if ((plane.block(r0, c0, r1 - r0, c1 - c0) != 0.0f).any()) mask.set(c, i, j);
      }
    }
  }
  return mask;
}

TileMask mask_or(const TileMask& a, const TileMask& b) {
  TileMask out = a;
  out |= b;
  return out;
}

IncrementTensor::IncrementTensor(Tensor v, TileMask m) : values(std::move(v)), mask(std::move(m)) {
  if (mask.tensor_shape() != values.shape())
    throw ShapeError("increment mask covers " + to_string(mask.tensor_shape()) + " but values are " +
                     to_string(values.shape()));
}

IncrementTensor IncrementTensor::zeros(Shape shape, TileShape tile) {
  return IncrementTensor(Tensor(shape), TileMask(shape, tile));
}

IncrementTensor IncrementTensor::from_values(Tensor v, TileShape tile) {
  TileMask m = make_tile_mask(v, tile);
  return IncrementTensor(std::move(v), std::move(m));
}

bool IncrementTensor::is_sound() const {
  for (int c = 0; c < values.channels(); ++c) {
    auto plane = values.plane(c);
    for (int i = 0; i < mask.rows(); ++i)
      for (int j = 0; j < mask.cols(); ++j) {
        if (mask(c, i, j)) continue;
        const int r0 = mask.row_begin(i), c0 = mask.col_begin(j);
        if ((plane.block(r0, c0, mask.row_end(i) - r0, mask.col_end(j) - c0) != 0.0f).any()) return false;
      }
  }
  return true;
}

void integrate_inplace(Tensor& dense, const IncrementTensor& incr) {
  if (dense.shape() != incr.shape())
    throw ShapeError("integrate: " + to_string(dense.shape()) + " vs " + to_string(incr.shape()));
  const TileMask& m = incr.mask;
  for (int c = 0; c < dense.channels(); ++c) {
    if (!m.channel_any(c)) continue;
    auto dst = dense.plane(c);
    auto src = incr.values.plane(c);
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        if (!m(c, i, j)) continue;
        const int r0 = m.row_begin(i), c0 = m.col_begin(j);
        const int nh = m.row_end(i) - r0, nw = m.col_end(j) - c0;
        dst.block(r0, c0, nh, nw) += src.block(r0, c0, nh, nw);
      }
  }
}

Tensor integrate(const Tensor& dense, const IncrementTensor& incr) {
  Tensor out = dense;
  integrate_inplace(out, incr);
  return out;
}

ConvFilter::ConvFilter(int out_channels, int in_channels, int kernel_h, int kernel_w)
    : ConvFilter(out_channels, in_channels, kernel_h, kernel_w,
                 Eigen::ArrayXf::Zero(Eigen::Index(out_channels) * in_channels * kernel_h * kernel_w)) {}

ConvFilter::ConvFilter(int out_channels, int in_channels, int kernel_h, int kernel_w, Eigen::ArrayXf values)
    : out_(out_channels), in_(in_channels), kh_(kernel_h), kw_(kernel_w), data_(std::move(values)) {
  if (out_ < 1 || in_ < 1 || kh_ < 1 || kw_ < 1) throw ShapeError("conv filter dimensions must be >= 1");
  if (data_.size() != Eigen::Index(out_) * in_ * kh_ * kw_) throw ShapeError("conv filter data length mismatch");
}

int conv_output_extent(int extent, int kernel, const ConvParams& p) {
  if (p.stride < 1) throw ShapeError("conv stride must be >= 1");
  if (p.padding < 0) throw ShapeError("conv padding must be >= 0");
  const int span = extent + 2 * p.padding - kernel;
  if (span < 0) throw ShapeError("conv kernel larger than padded input");
  return span / p.stride + 1;
}

Shape conv_output_shape(const Shape& in, const ConvFilter& f, const ConvParams& p) {
  if (in.channels != f.in_channels())
    throw ShapeError("conv expects " + std::to_string(f.in_channels()) + " input channels, got " +
                     std::to_string(in.channels));
  return {f.out_channels(), conv_output_extent(in.height, f.kernel_h(), p),
          conv_output_extent(in.width, f.kernel_w(), p)};
}


Tensor dense_conv2d(const Tensor& x, const ConvFilter& filter, const Eigen::VectorXf& bias,
                    const ConvParams& params) {
  const Shape os = conv_output_shape(x.shape(), filter, params);
  if (bias.size() != 0 && bias.size() != os.channels) throw ShapeError("conv bias length mismatch");
  Tensor out(os);
  const int H = x.height(), W = x.width();
  const int s = params.stride, p = params.padding;
  for (int co = 0; co < os.channels; ++co) {
    if (bias.size() != 0) out.plane(co).setConstant(bias[co]);
    float* dst = out.plane_data(co);
    for (int ci = 0; ci < x.channels(); ++ci) {
      const float* src = x.plane_data(ci);
      for (int ky = 0; ky < filter.kernel_h(); ++ky) {
        int oy0, oy1;
        detail::tap_range(0, H, ky, s, p, os.height, oy0, oy1);
        for (int kx = 0; kx < filter.kernel_w(); ++kx) {
          int ox0, ox1;
          detail::tap_range(0, W, kx, s, p, os.width, ox0, ox1);
          const float wv = filter(co, ci, ky, kx);
          for (int oy = oy0; oy < oy1; ++oy) {
            const float* in_row = src + std::size_t(oy * s - p + ky) * W;
            float* out_row = dst + std::size_t(oy) * os.width;
            detail::axpy_row(out_row, in_row, wv, ox0, ox1, s, kx - p);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace evinc
