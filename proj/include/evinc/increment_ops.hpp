#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evinc/tensor.hpp"

namespace evinc {

/// Floating-point operation tally. Two ops per multiply-accumulate.
struct FlopCounter {
  std::uint64_t performed = 0;
  std::uint64_t dense_equiv = 0;

  FlopCounter& operator+=(const FlopCounter& o) {
    performed += o.performed;
    dense_equiv += o.dense_equiv;
    return *this;
  }
  friend bool operator==(const FlopCounter&, const FlopCounter&) = default;
};

/// Running sum of every increment a nonlinear node has consumed since its
/// last dense pass. Equal to the node's true dense input right after one.
struct AccState {
  Tensor x_acc;
};

struct Activation {
  enum class Kind { Identity, ReLU, Sigmoid, Tanh, LeakyReLU };

  Kind kind = Kind::ReLU;
  float alpha = 0.01f;  // LeakyReLU slope

  static Activation relu() { return {Kind::ReLU, 0.0f}; }
  static Activation sigmoid() { return {Kind::Sigmoid, 0.0f}; }
  static Activation tanh() { return {Kind::Tanh, 0.0f}; }
  static Activation leaky(float a) { return {Kind::LeakyReLU, a}; }
  /// "relu", "sigmoid", "tanh", "identity", "leaky:<alpha>".
  static Activation parse(const std::string& text);
  std::string name() const;

  template <class Derived>
  Eigen::ArrayXXf operator()(const Eigen::ArrayBase<Derived>& x) const {
    switch (kind) {
      case Kind::Identity: return x;
      case Kind::ReLU: return x.max(0.0f);
      case Kind::Sigmoid: return (1.0f + (-x).exp()).inverse();
      case Kind::Tanh: return x.tanh();
      case Kind::LeakyReLU: return (x > 0.0f).select(x, alpha * x);
    }
    return x;
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

enum class UpsampleMode { Nearest, Bilinear };

// ---------------------------------------------------------------------------
// Increment operators. Every operator emits a sound mask; linear ones drop
// biases, nonlinear ones read and advance their AccState.
// ---------------------------------------------------------------------------

/// Tile-skipping convolution of an increment.
///
/// Work is scattered per input channel from the true tiles only: an input
/// pixel contributes iff its tile is flagged, so receptive fields that
/// straddle tile borders gather partial sums from the flagged side. Taps
/// that fall in the zero padding are attributed to the nearest boundary tile
/// for accounting, which makes a fully-true mask cost exactly dense_equiv.
///
/// The output mask is the channel-OR of the input mask, dilated to every
/// output tile a flagged input tile can reach, broadcast to all C_out.
IncrementTensor inc_conv2d(const IncrementTensor& x, const ConvFilter& filter, const ConvParams& params,
                           FlopCounter& meter);

/// Output-tile reach of the conv for a single-channel (row, col) tile grid.
TileMask conv_output_mask(const TileMask& in, const ConvFilter& filter, const ConvParams& params);

/// matrix * x for a flat increment of shape (1, 1, N); columns under false
/// tiles are skipped. Output is (1, 1, M), all-true unless nothing was read.
IncrementTensor inc_linear(const IncrementTensor& x, const Eigen::MatrixXf& matrix, FlopCounter& meter);

IncrementTensor inc_add(const IncrementTensor& a, const IncrementTensor& b);

/// y = fn(acc + x) - fn(acc) on flagged tiles, then acc += x.
IncrementTensor inc_activation(const IncrementTensor& x, AccState& state, const Activation& fn);

/// y = (acc_a + a) * b + acc_b * a on the OR'd tiles, then both accumulators advance.
IncrementTensor inc_mul(const IncrementTensor& a, const IncrementTensor& b, AccState& sa, AccState& sb);

IncrementTensor inc_concat(std::span<const IncrementTensor* const> parts);
IncrementTensor inc_concat(const std::vector<IncrementTensor>& parts);

IncrementTensor inc_upsample(const IncrementTensor& x, int factor, UpsampleMode mode);

/// y = maxpool(acc + x) - maxpool(acc), acc += x.
IncrementTensor inc_maxpool(const IncrementTensor& x, AccState& state, int window, int stride);

// ---------------------------------------------------------------------------
// Dense counterparts, used by dense passes and as test oracles.
// ---------------------------------------------------------------------------

Tensor dense_activation(const Tensor& x, const Activation& fn);
Tensor dense_add(const Tensor& a, const Tensor& b);
Tensor dense_mul(const Tensor& a, const Tensor& b);
Tensor dense_concat(std::span<const Tensor* const> parts);
Tensor dense_upsample(const Tensor& x, int factor, UpsampleMode mode);
Tensor dense_maxpool(const Tensor& x, int window, int stride);
/// matrix * flatten(x) (+ bias) as a (1, 1, M) tensor.
Tensor dense_linear(const Tensor& x, const Eigen::MatrixXf& matrix, const Eigen::VectorXf& bias);

Shape upsample_shape(const Shape& in, int factor);
Shape maxpool_shape(const Shape& in, int window, int stride);

/// 2 * K_h * K_w * C_in * C_out * H_out * W_out.
std::uint64_t conv_dense_flops(const Shape& in, const ConvFilter& filter, const ConvParams& params);

}  // namespace evinc
