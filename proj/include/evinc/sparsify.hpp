#pragma once

#include "evinc/tensor.hpp"

namespace evinc {

/// Error-feedback rounding state for one sparsification layer.
///
/// Each step rounds delta + x to the nearest multiple of k and keeps the
/// round-off in delta, so the emitted increments never lag the true ones by
/// more than k/2 per element. With an adaptive state, k tracks
/// threshold * (EMA of the L2 norm of the corrected input).
struct SparsifyState {
  Tensor delta;
  float norm_ema = 0.0f;
  float threshold = 0.0f;  // t_p
  float k = 0.0f;
  float ema_decay = 0.9f;
  bool adaptive = true;
  bool initialized = false;

  /// Adaptive state; k stays 0 until the first reset.
  static SparsifyState make(Shape shape, float threshold, float ema_decay = 0.9f);
  /// Rounding multiple pinned to `k` (no norm tracking).
  static SparsifyState fixed(Shape shape, float k);

  friend bool operator==(const SparsifyState& a, const SparsifyState& b);
};

IncrementTensor sparsify_step(const IncrementTensor& x, SparsifyState& state);

/// delta <- 0; for adaptive states norm_ema <- ||dense_input||_2 and k <- threshold * norm_ema.
void reset(SparsifyState& state, const Tensor& dense_input);

}  // namespace evinc
