#pragma once

#include "evinc/model_spec.hpp"

namespace evinc {

enum class SparsifyPlacement {
  EveryConv,  // one sparsify node ahead of every conv
  EveryPair,  // one ahead of each pair of convs
};

struct PlainCnnConfig {
  int depth = 4;
  int channels = 16;
  float threshold = 0.1f;
  float ema_decay = 0.9f;
  Shape input{2, 180, 240};
  TileShape tile;
  int kernel = 3;
  int pool_every = 2;  // 2x2 maxpool after every n-th block except the last; 0 disables
  SparsifyPlacement placement = SparsifyPlacement::EveryConv;
};

/// Stack of [sparsify ->] conv -> ReLU blocks with optional maxpool downsampling.
ModelSpec build_plain_cnn(const PlainCnnConfig& cfg);
ModelSpec build_plain_cnn(int depth, int channels, float threshold);

struct UNetConfig {
  int levels = 3;
  int base_channels = 4;
  int growth = 2;
  int kernel = 3;
  Activation activation = Activation::relu();
  float threshold = 0.1f;
  float ema_decay = 0.9f;
  TileShape tile;
  int prediction_channels = 2;
  int head_channels = 8;  // width of the first of the two final convs
  Shape input{2, 180, 240};
  UpsampleMode upsample = UpsampleMode::Nearest;
};

/// Encoder (stride-2 conv downsampling), decoder chained level to level
/// through upsample + skip concat, 1x1 prediction heads per level, and two
/// final convs on the top decoder output.
ModelSpec build_unet(const UNetConfig& cfg);

/// Same encoder; each decoder level sees only its own encoder skip. All
/// decoder outputs and predictions are upsampled to full resolution,
/// concatenated, and fed through the two final convs.
ModelSpec build_delayed_unet(const UNetConfig& cfg);

/// Ids of the two final convs of either UNet variant.
inline constexpr const char* kHeadConv1 = "head_conv1";
inline constexpr const char* kHeadConv2 = "head_conv2";

}  // namespace evinc
