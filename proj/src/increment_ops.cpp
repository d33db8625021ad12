#include "evinc/increment_ops.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "detail.hpp"

namespace evinc {

using detail::for_each_true_tile;

Activation Activation::parse(const std::string& text) {
  if (text == "relu") return relu();
  if (text == "sigmoid") return sigmoid();
  if (text == "tanh") return tanh();
  if (text == "identity") return {Kind::Identity, 0.0f};
  if (text.rfind("leaky:", 0) == 0) {
    try {
      std::size_t used = 0;
      const float a = std::stof(text.substr(6), &used);
      if (used == text.size() - 6) return leaky(a);
    } catch (const std::exception&) {
    }
  }
  if (text == "leaky") return leaky(0.01f);
  throw Error("unknown activation '" + text + "'");
}

std::string Activation::name() const {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::ReLU: return "relu";
    case Kind::Sigmoid: return "sigmoid";
    case Kind::Tanh: return "tanh";
    case Kind::LeakyReLU: {
      char buf[32];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, alpha);
      return "leaky:" + std::string(buf, p);
    }
  }
  return "?";
}

std::uint64_t conv_dense_flops(const Shape& in, const ConvFilter& f, const ConvParams& params) {
  const Shape os = conv_output_shape(in, f, params);
  return 2ull * std::uint64_t(f.kernel_h()) * std::uint64_t(f.kernel_w()) * std::uint64_t(f.in_channels()) *
         std::uint64_t(f.out_channels()) * std::uint64_t(os.height) * std::uint64_t(os.width);
}

namespace {

// Input range of tile index t along one axis, widened into the zero padding
// for the first and last tile.
inline void padded_extent(int t, int n_tiles, int begin, int end, int extent, int pad, int& lo, int& hi) {
  lo = (t == 0) ? -pad : begin;
  hi = (t == n_tiles - 1) ? extent + pad : end;
}

// Number of (output, tap) pairs along one axis whose input index lies in [lo, hi).
inline std::uint64_t axis_taps(int lo, int hi, int kernel, int stride, int pad, int n_out) {
  std::uint64_t n = 0;
  for (int k = 0; k < kernel; ++k) {
    int o0, o1;
    detail::tap_range(lo, hi, k, stride, pad, n_out, o0, o1);
    if (o1 > o0) n += std::uint64_t(o1 - o0);
  }
  return n;
}

// Output index range [o_min, o_max] reachable from input range [lo, hi).
inline bool reach(int lo, int hi, int kernel, int stride, int pad, int n_out, int& o_min, int& o_max) {
  o_min = std::max(0, detail::ceil_div(lo + pad - kernel + 1, stride));
  o_max = std::min(n_out - 1, detail::floor_div(hi - 1 + pad, stride));
  return o_min <= o_max;
}

void check_compatible(const IncrementTensor& a, const IncrementTensor& b, const char* op) {
  if (a.shape() != b.shape() || a.tile() != b.tile())
    throw ShapeError(std::string(op) + ": operand shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " (or tile shapes) differ");
}

void check_acc(const AccState& s, const Shape& shape, const char* op) {
  if (s.x_acc.shape() != shape)
    throw ShapeError(std::string(op) + ": accumulator is " + to_string(s.x_acc.shape()) + ", input is " +
                     to_string(shape));
}

// Per-axis sampling table: out[o] = (1 - w[o]) * in[i0[o]] + w[o] * in[i1[o]].
struct ResampleAxis {
  std::vector<int> i0, i1;
  std::vector<float> w;
};

ResampleAxis resample_axis(int in_extent, int factor, UpsampleMode mode) {
  const int n = in_extent * factor;
  ResampleAxis ax;
  ax.i0.resize(n);
  ax.i1.resize(n);
  ax.w.resize(n);
  for (int o = 0; o < n; ++o) {
    if (mode == UpsampleMode::Nearest) {
      ax.i0[o] = ax.i1[o] = o / factor;
      ax.w[o] = 0.0f;
    } else {
      // Half-pixel centers, clamped at the borders.
      const double src = std::max(0.0, (o + 0.5) / factor - 0.5);
      const int lo = std::min(int(src), in_extent - 1);
      ax.i0[o] = lo;
      ax.i1[o] = std::min(lo + 1, in_extent - 1);
      ax.w[o] = float(src - lo);
    }
  }
  return ax;
}

inline float sample(const float* plane, int width, const ResampleAxis& ry, const ResampleAxis& rx, int oy, int ox) {
  const float* r0 = plane + std::size_t(ry.i0[oy]) * width;
  const float* r1 = plane + std::size_t(ry.i1[oy]) * width;
  const float wx = rx.w[ox], wy = ry.w[oy];
  const float top = (1.0f - wx) * r0[rx.i0[ox]] + wx * r0[rx.i1[ox]];
  const float bot = (1.0f - wx) * r1[rx.i0[ox]] + wx * r1[rx.i1[ox]];
  return (1.0f - wy) * top + wy * bot;
}

inline float window_max(const float* plane, int width, int y0, int x0, int window) {
  float m = -std::numeric_limits<float>::infinity();
  for (int dy = 0; dy < window; ++dy) {
    const float* row = plane + std::size_t(y0 + dy) * width + x0;
    for (int dx = 0; dx < window; ++dx) m = std::max(m, row[dx]);
  }
  return m;
}

}  // namespace

TileMask conv_output_mask(const TileMask& in, const ConvFilter& filter, const ConvParams& params) {
  const Shape is = in.tensor_shape();
  const Shape os = conv_output_shape(is, filter, params);
  TileMask out(os, in.tile());
  std::vector<std::uint8_t> grid(std::size_t(out.rows()) * out.cols(), 0);
  const TileShape tile = in.tile();
  for (int i = 0; i < in.rows(); ++i) {
    int oy_min, oy_max;
    if (!reach(in.row_begin(i), in.row_end(i), filter.kernel_h(), params.stride, params.padding, os.height, oy_min,
               oy_max))
      continue;
    for (int j = 0; j < in.cols(); ++j) {
      bool flagged = false;
      for (int c = 0; c < in.channels() && !flagged; ++c) flagged = in(c, i, j);
      if (!flagged) continue;
      int ox_min, ox_max;
      if (!reach(in.col_begin(j), in.col_end(j), filter.kernel_w(), params.stride, params.padding, os.width, ox_min,
                 ox_max))
        continue;
      for (int ti = oy_min / tile.h; ti <= oy_max / tile.h; ++ti)
        for (int tj = ox_min / tile.w; tj <= ox_max / tile.w; ++tj) grid[std::size_t(ti) * out.cols() + tj] = 1;
    }
  }
  for (int c = 0; c < os.channels; ++c)
    for (int ti = 0; ti < out.rows(); ++ti)
      for (int tj = 0; tj < out.cols(); ++tj)
        if (grid[std::size_t(ti) * out.cols() + tj]) out.set(c, ti, tj);
  return out;
}

IncrementTensor inc_conv2d(const IncrementTensor& x, const ConvFilter& filter, const ConvParams& params,
                           FlopCounter& meter) {
  const Shape is = x.shape();
  const Shape os = conv_output_shape(is, filter, params);
  const TileMask& m = x.mask;
  const int s = params.stride, p = params.padding;
  const int H = is.height, W = is.width;
  const int kh = filter.kernel_h(), kw = filter.kernel_w();

  std::vector<std::uint64_t> row_taps(m.rows()), col_taps(m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    int lo, hi;
    padded_extent(i, m.rows(), m.row_begin(i), m.row_end(i), H, p, lo, hi);
    row_taps[i] = axis_taps(lo, hi, kh, s, p, os.height);
  }
  for (int j = 0; j < m.cols(); ++j) {
    int lo, hi;
    padded_extent(j, m.cols(), m.col_begin(j), m.col_end(j), W, p, lo, hi);
    col_taps[j] = axis_taps(lo, hi, kw, s, p, os.width);
  }

  Tensor out(os);
  std::uint64_t macs = 0;
  for (int ci = 0; ci < is.channels; ++ci) {
    if (!m.channel_any(ci)) continue;
    const float* src = x.values.plane_data(ci);
    for (int i = 0; i < m.rows(); ++i) {
      const int r0 = m.row_begin(i), r1 = m.row_end(i);
      for (int j = 0; j < m.cols(); ++j) {
        if (!m(ci, i, j)) continue;
        macs += std::uint64_t(os.channels) * row_taps[i] * col_taps[j];
        const int c0 = m.col_begin(j), c1 = m.col_end(j);
        for (int co = 0; co < os.channels; ++co) {
          float* dst = out.plane_data(co);
          for (int ky = 0; ky < kh; ++ky) {
            int oy0, oy1;
            detail::tap_range(r0, r1, ky, s, p, os.height, oy0, oy1);
            if (oy0 >= oy1) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ox0, ox1;
              detail::tap_range(c0, c1, kx, s, p, os.width, ox0, ox1);
              if (ox0 >= ox1) continue;
              const float wv = filter(co, ci, ky, kx);
              for (int oy = oy0; oy < oy1; ++oy)
                detail::axpy_row(dst + std::size_t(oy) * os.width, src + std::size_t(oy * s - p + ky) * W, wv, ox0,
                                 ox1, s, kx - p);
            }
          }
        }
      }
    }
  }
  meter.performed += 2 * macs;
  meter.dense_equiv += conv_dense_flops(is, filter, params);
  return IncrementTensor(std::move(out), conv_output_mask(m, filter, params));
}

IncrementTensor inc_linear(const IncrementTensor& x, const Eigen::MatrixXf& matrix, FlopCounter& meter) {
  const Shape is = x.shape();
  if (is.channels != 1 || is.height != 1) throw ShapeError("inc_linear expects a flat (1, 1, N) increment");
  if (matrix.cols() != is.width)
    throw ShapeError("inc_linear: matrix has " + std::to_string(matrix.cols()) + " columns, input has " +
                     std::to_string(is.width) + " elements");
  const int rows = int(matrix.rows());
  Eigen::Map<const Eigen::VectorXf> v(x.values.data(), is.width);
  Eigen::VectorXf y = Eigen::VectorXf::Zero(rows);
  std::uint64_t used_cols = 0;
  for_each_true_tile(x.mask, [&](int, int, int c0, int, int n) {
    y.noalias() += matrix.middleCols(c0, n) * v.segment(c0, n);
    used_cols += std::uint64_t(n);
  });
  meter.performed += 2ull * std::uint64_t(rows) * used_cols;
  meter.dense_equiv += 2ull * std::uint64_t(rows) * std::uint64_t(is.width);
  const Shape os{1, 1, rows};
  return IncrementTensor(Tensor(os, y.array()), TileMask(os, x.tile(), used_cols != 0));
}

IncrementTensor inc_add(const IncrementTensor& a, const IncrementTensor& b) {
  check_compatible(a, b, "inc_add");
  Tensor out(a.shape());
  for_each_true_tile(a.mask, [&](int c, int r0, int c0, int nh, int nw) {
    out.plane(c).block(r0, c0, nh, nw) = a.values.plane(c).block(r0, c0, nh, nw);
  });
  for_each_true_tile(b.mask, [&](int c, int r0, int c0, int nh, int nw) {
    out.plane(c).block(r0, c0, nh, nw) += b.values.plane(c).block(r0, c0, nh, nw);
  });
  return IncrementTensor(std::move(out), mask_or(a.mask, b.mask));
}

IncrementTensor inc_activation(const IncrementTensor& x, AccState& state, const Activation& fn) {
  check_acc(state, x.shape(), "inc_activation");
  Tensor out(x.shape());
  for_each_true_tile(x.mask, [&](int c, int r0, int c0, int nh, int nw) {
    auto acc = state.x_acc.plane(c).block(r0, c0, nh, nw);
    auto dx = x.values.plane(c).block(r0, c0, nh, nw);
    out.plane(c).block(r0, c0, nh, nw) = fn(acc + dx) - fn(acc);
    acc += dx;
  });
  return IncrementTensor(std::move(out), x.mask);
}

IncrementTensor inc_mul(const IncrementTensor& a, const IncrementTensor& b, AccState& sa, AccState& sb) {
  check_compatible(a, b, "inc_mul");
  check_acc(sa, a.shape(), "inc_mul");
  check_acc(sb, b.shape(), "inc_mul");
  TileMask mask = mask_or(a.mask, b.mask);
  Tensor out(a.shape());
  for_each_true_tile(mask, [&](int c, int r0, int c0, int nh, int nw) {
    auto acc_a = sa.x_acc.plane(c).block(r0, c0, nh, nw);
    auto acc_b = sb.x_acc.plane(c).block(r0, c0, nh, nw);
    auto da = a.values.plane(c).block(r0, c0, nh, nw);
    auto db = b.values.plane(c).block(r0, c0, nh, nw);
    out.plane(c).block(r0, c0, nh, nw) = (acc_a + da) * db + acc_b * da;
    acc_a += da;
    acc_b += db;
  });
  return IncrementTensor(std::move(out), std::move(mask));
}

IncrementTensor inc_concat(std::span<const IncrementTensor* const> parts) {
  if (parts.empty()) throw ShapeError("inc_concat: no inputs");
  const Shape first = parts.front()->shape();
  const TileShape tile = parts.front()->tile();
  int channels = 0;
  for (const IncrementTensor* p : parts) {
    if (p->shape().height != first.height || p->shape().width != first.width || p->tile() != tile)
      throw ShapeError("inc_concat: spatial or tile shape mismatch (" + to_string(first) + " vs " +
                       to_string(p->shape()) + ")");
    channels += p->shape().channels;
  }
  const Shape os{channels, first.height, first.width};
  Tensor values(os);
  TileMask mask(os, tile);
  int base = 0;
  for (const IncrementTensor* p : parts) {
    const std::size_t n = p->values.size();
    std::copy_n(p->values.data(), n, values.plane_data(base));
    for (int c = 0; c < p->shape().channels; ++c)
      for (int i = 0; i < mask.rows(); ++i)
        for (int j = 0; j < mask.cols(); ++j)
          if (p->mask(c, i, j)) mask.set(base + c, i, j);
    base += p->shape().channels;
  }
  return IncrementTensor(std::move(values), std::move(mask));
}

IncrementTensor inc_concat(const std::vector<IncrementTensor>& parts) {
  std::vector<const IncrementTensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return inc_concat(std::span<const IncrementTensor* const>(ptrs));
}

Shape upsample_shape(const Shape& in, int factor) {
  if (factor < 1) throw ShapeError("upsample factor must be >= 1");
  return {in.channels, in.height * factor, in.width * factor};
}

IncrementTensor inc_upsample(const IncrementTensor& x, int factor, UpsampleMode mode) {
  const Shape is = x.shape();
  const Shape os = upsample_shape(is, factor);
  const ResampleAxis ry = resample_axis(is.height, factor, mode);
  const ResampleAxis rx = resample_axis(is.width, factor, mode);
  const TileShape tile = x.tile();
  Tensor out(os);
  TileMask mask(os, tile);
  for (int i = 0; i < mask.rows(); ++i) {
    const int R0 = mask.row_begin(i), R1 = mask.row_end(i);
    const int ti0 = ry.i0[R0] / tile.h, ti1 = ry.i1[R1 - 1] / tile.h;
    for (int j = 0; j < mask.cols(); ++j) {
      const int C0 = mask.col_begin(j), C1 = mask.col_end(j);
      const int tj0 = rx.i0[C0] / tile.w, tj1 = rx.i1[C1 - 1] / tile.w;
      for (int c = 0; c < os.channels; ++c) {
        if (!detail::any_in_rect(x.mask, c, ti0, ti1, tj0, tj1)) continue;
        mask.set(c, i, j);
        const float* src = x.values.plane_data(c);
        float* dst = out.plane_data(c);
        for (int oy = R0; oy < R1; ++oy)
          for (int ox = C0; ox < C1; ++ox) dst[std::size_t(oy) * os.width + ox] = sample(src, is.width, ry, rx, oy, ox);
      }
    }
  }
  return IncrementTensor(std::move(out), std::move(mask));
}

Shape maxpool_shape(const Shape& in, int window, int stride) {
  if (window < 1 || stride < 1) throw ShapeError("maxpool window and stride must be >= 1");
  if (window > in.height || window > in.width)
    throw ShapeError("maxpool window " + std::to_string(window) + " larger than input " + to_string(in));
  return {in.channels, (in.height - window) / stride + 1, (in.width - window) / stride + 1};
}

IncrementTensor inc_maxpool(const IncrementTensor& x, AccState& state, int window, int stride) {
  const Shape is = x.shape();
  const Shape os = maxpool_shape(is, window, stride);
  check_acc(state, is, "inc_maxpool");
  const TileShape tile = x.tile();
  Tensor out(os);
  TileMask mask(os, tile);
  Tensor updated = state.x_acc;
  integrate_inplace(updated, x);
  for (int i = 0; i < mask.rows(); ++i) {
    const int R0 = mask.row_begin(i), R1 = mask.row_end(i);
    const int ti0 = (R0 * stride) / tile.h, ti1 = ((R1 - 1) * stride + window - 1) / tile.h;
    for (int j = 0; j < mask.cols(); ++j) {
      const int C0 = mask.col_begin(j), C1 = mask.col_end(j);
      const int tj0 = (C0 * stride) / tile.w, tj1 = ((C1 - 1) * stride + window - 1) / tile.w;
      for (int c = 0; c < os.channels; ++c) {
        if (!detail::any_in_rect(x.mask, c, ti0, ti1, tj0, tj1)) continue;
        mask.set(c, i, j);
        const float* before = state.x_acc.plane_data(c);
        const float* after = updated.plane_data(c);
        float* dst = out.plane_data(c);
        for (int oy = R0; oy < R1; ++oy)
          for (int ox = C0; ox < C1; ++ox)
            dst[std::size_t(oy) * os.width + ox] = window_max(after, is.width, oy * stride, ox * stride, window) -
                                                   window_max(before, is.width, oy * stride, ox * stride, window);
      }
    }
  }
  state.x_acc = std::move(updated);
  return IncrementTensor(std::move(out), std::move(mask));
}

Tensor dense_activation(const Tensor& x, const Activation& fn) {
  Tensor out(x.shape());
  for (int c = 0; c < x.channels(); ++c) out.plane(c) = fn(x.plane(c));
  return out;
}

Tensor dense_add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return Tensor(a.shape(), a.array() + b.array());
}

Tensor dense_mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return Tensor(a.shape(), a.array() * b.array());
}

Tensor dense_concat(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape first = parts.front()->shape();
  int channels = 0;
  for (const Tensor* p : parts) {
    if (p->height() != first.height || p->width() != first.width)
      throw ShapeError("concat: spatial mismatch (" + to_string(first) + " vs " + to_string(p->shape()) + ")");
    channels += p->channels();
  }
  Tensor out(channels, first.height, first.width);
  int base = 0;
  for (const Tensor* p : parts) {
    std::copy_n(p->data(), p->size(), out.plane_data(base));
    base += p->channels();
  }
  return out;
}

Tensor dense_upsample(const Tensor& x, int factor, UpsampleMode mode) {
  const Shape os = upsample_shape(x.shape(), factor);
  const ResampleAxis ry = resample_axis(x.height(), factor, mode);
  const ResampleAxis rx = resample_axis(x.width(), factor, mode);
  Tensor out(os);
  for (int c = 0; c < os.channels; ++c) {
    const float* src = x.plane_data(c);
    float* dst = out.plane_data(c);
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) dst[std::size_t(oy) * os.width + ox] = sample(src, x.width(), ry, rx, oy, ox);
  }
  return out;
}

Tensor dense_maxpool(const Tensor& x, int window, int stride) {
  const Shape os = maxpool_shape(x.shape(), window, stride);
  Tensor out(os);
  for (int c = 0; c < os.channels; ++c) {
    const float* src = x.plane_data(c);
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) out(c, oy, ox) = window_max(src, x.width(), oy * stride, ox * stride, window);
  }
  return out;
}

Tensor dense_linear(const Tensor& x, const Eigen::MatrixXf& matrix, const Eigen::VectorXf& bias) {
  if (matrix.cols() != Eigen::Index(x.size()))
    throw ShapeError("linear: matrix has " + std::to_string(matrix.cols()) + " columns, input has " +
                     std::to_string(x.size()) + " elements");
  Eigen::VectorXf y = matrix * x.array().matrix();
  if (bias.size() != 0) {
    if (bias.size() != y.size()) throw ShapeError("linear bias length mismatch");
    y += bias;
  }
  return Tensor(Shape{1, 1, int(y.size())}, y.array());
}

}  // namespace evinc
