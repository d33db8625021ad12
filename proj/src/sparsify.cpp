#include "evinc/sparsify.hpp"

#include <cmath>

namespace evinc {

SparsifyState SparsifyState::make(Shape shape, float threshold, float ema_decay) {
  if (threshold < 0.0f) throw Error("sparsify threshold must be >= 0");
  if (!(ema_decay > 0.0f && ema_decay < 1.0f)) throw Error("sparsify ema_decay must lie in (0, 1)");
  SparsifyState s;
  s.delta = Tensor(shape);
  s.threshold = threshold;
  s.ema_decay = ema_decay;
  return s;
}

SparsifyState SparsifyState::fixed(Shape shape, float k) {
  if (k < 0.0f) throw Error("rounding multiple must be >= 0");
  SparsifyState s;
  s.delta = Tensor(shape);
  s.k = k;
  s.adaptive = false;
  s.initialized = true;
  return s;
}

bool operator==(const SparsifyState& a, const SparsifyState& b) {
  return a.delta.shape() == b.delta.shape() && (a.delta.array() == b.delta.array()).all() &&
         a.norm_ema == b.norm_ema && a.threshold == b.threshold && a.k == b.k && a.ema_decay == b.ema_decay &&
         a.adaptive == b.adaptive && a.initialized == b.initialized;
}

IncrementTensor sparsify_step(const IncrementTensor& x, SparsifyState& state) {
  if (state.delta.shape() != x.shape())
    throw ShapeError("sparsify: residual is " + to_string(state.delta.shape()) + ", input is " + to_string(x.shape()));
  Tensor corrected(x.shape(), state.delta.array() + x.values.array());
  Tensor emitted(x.shape());
  const float k = state.k;
  if (k == 0.0f) {
    emitted = corrected;
    state.delta.set_zero();
  } else {
    emitted.array() = k * (0.5f + corrected.array() / k).floor();
    state.delta.array() = corrected.array() - emitted.array();
  }
  if (state.adaptive && state.initialized) {
    const float norm = corrected.array().matrix().norm();
    state.norm_ema = state.ema_decay * state.norm_ema + (1.0f - state.ema_decay) * norm;
    state.k = state.threshold * state.norm_ema;
  }
  return IncrementTensor::from_values(std::move(emitted), x.tile());
}

void reset(SparsifyState& state, const Tensor& dense_input) {
  state.delta = Tensor(dense_input.shape());
  if (state.adaptive) {
    state.norm_ema = dense_input.array().matrix().norm();
    state.k = state.threshold * state.norm_ema;
  }
  state.initialized = true;
}

}  // namespace evinc
