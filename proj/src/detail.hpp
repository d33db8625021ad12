#pragma once

#include <algorithm>
#include <cstddef>

namespace evinc::detail {

inline int floor_div(int v, int d) { return v >= 0 ? v / d : -((-v + d - 1) / d); }
inline int ceil_div(int v, int d) { return v >= 0 ? (v + d - 1) / d : -((-v) / d); }

// Output indices o in [0, n_out) whose tap k lands in input range [lo, hi),
// i.e. o*stride - pad + k in [lo, hi).
inline void tap_range(int lo, int hi, int k, int stride, int pad, int n_out, int& o_begin, int& o_end) {
  o_begin = std::max(0, ceil_div(lo + pad - k, stride));
  o_end = std::min(n_out, ceil_div(hi + pad - k, stride));
}

// out[o] += w * in[o*stride + offset] for o in [o0, o1).
inline void axpy_row(float* __restrict out, const float* __restrict in, float w, int o0, int o1, int stride,
                     int offset) {
  if (stride == 1) {
    for (int o = o0; o < o1; ++o) out[o] += w * in[o + offset];
  } else {
    for (int o = o0; o < o1; ++o) out[o] += w * in[o * stride + offset];
  }
}

}  // namespace evinc::detail

#include "evinc/tensor.hpp"

namespace evinc::detail {

// fn(c, r0, c0, rows, cols) for every flagged tile.
template <class Fn>
void for_each_true_tile(const TileMask& m, Fn&& fn) {
  for (int c = 0; c < m.channels(); ++c) {
    if (!m.channel_any(c)) continue;
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        if (m(c, i, j)) {
          const int r0 = m.row_begin(i), c0 = m.col_begin(j);
          fn(c, r0, c0, m.row_end(i) - r0, m.col_end(j) - c0);
        }
  }
}

// True iff any tile of channel c in the inclusive tile rectangle is flagged.
inline bool any_in_rect(const TileMask& m, int c, int i0, int i1, int j0, int j1) {
  i0 = std::max(i0, 0);
  j0 = std::max(j0, 0);
  i1 = std::min(i1, m.rows() - 1);
  j1 = std::min(j1, m.cols() - 1);
  for (int i = i0; i <= i1; ++i)
    for (int j = j0; j <= j1; ++j)
      if (m(c, i, j)) return true;
  return false;
}

}  // namespace evinc::detail
