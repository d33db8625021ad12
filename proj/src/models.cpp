#include "evinc/models.hpp"

namespace evinc {

namespace {

class SpecWriter {
 public:
  explicit SpecWriter(ModelSpec& spec, float threshold, float decay) : spec_(spec), tp_(threshold), decay_(decay) {}

  std::string sparsify(const std::string& in, const std::string& id) {
    NodeSpec n;
    n.id = id;
    n.op = OpKind::Sparsify;
    n.inputs = {in};
    n.threshold = tp_;
    n.ema_decay = decay_;
    return add(std::move(n));
  }

  std::string conv(const std::string& in, const std::string& id, int out, int kernel, int stride = 1) {
    NodeSpec n;
    n.id = id;
    n.op = OpKind::Conv;
    n.inputs = {in};
    n.out_channels = out;
    n.kernel = kernel;
    n.stride = stride;
    n.padding = kernel / 2;
    return add(std::move(n));
  }

  // sparsify -> conv
  std::string sconv(const std::string& in, const std::string& id, int out, int kernel, int stride = 1) {
    return conv(sparsify(in, id + "_sp"), id, out, kernel, stride);
  }

  std::string act(const std::string& in, const std::string& id, Activation fn) {
    NodeSpec n;
    n.id = id;
    n.op = OpKind::Activation;
    n.inputs = {in};
    n.activation = fn;
    return add(std::move(n));
  }

  std::string maxpool(const std::string& in, const std::string& id) {
    NodeSpec n;
    n.id = id;
    n.op = OpKind::MaxPool;
    n.inputs = {in};
    n.window = 2;
    n.stride = 2;
    return add(std::move(n));
  }

  std::string upsample(const std::string& in, const std::string& id, int factor, UpsampleMode mode) {
    // Factors above 4 are chained from 4x and 2x stages.
    std::string cur = in;
    int stage = 0;
    while (factor > 1) {
      const int f = factor % 4 == 0 ? 4 : 2;
      if (factor % f != 0) throw ShapeError("upsample factor must be a power of two");
      NodeSpec n;
      n.id = factor == f ? id : id + "_s" + std::to_string(stage++);
      n.op = OpKind::Upsample;
      n.inputs = {cur};
      n.factor = f;
      n.mode = mode;
      cur = add(std::move(n));
      factor /= f;
    }
    return cur;
  }

  std::string concat(std::vector<std::string> ins, const std::string& id) {
    NodeSpec n;
    n.id = id;
    n.op = OpKind::Concat;
    n.inputs = std::move(ins);
    return add(std::move(n));
  }

 private:
  std::string add(NodeSpec n) {
    spec_.nodes.push_back(std::move(n));
    return spec_.nodes.back().id;
  }

  ModelSpec& spec_;
  float tp_, decay_;
};

void check_unet(const UNetConfig& cfg) {
  if (cfg.levels < 2) throw ShapeError("UNet needs at least 2 levels");
  if (cfg.base_channels < 1 || cfg.growth < 1 || cfg.prediction_channels < 1 || cfg.head_channels < 1)
    throw ShapeError("UNet channel counts must be >= 1");
  const int div = 1 << (cfg.levels - 1);
  if (cfg.input.height % div != 0 || cfg.input.width % div != 0)
    throw ShapeError("UNet input " + std::to_string(cfg.input.height) + "x" + std::to_string(cfg.input.width) +
                     " not divisible by " + std::to_string(div));
}

int level_channels(const UNetConfig& cfg, int level) {
  int c = cfg.base_channels;
  for (int i = 0; i < level; ++i) c *= cfg.growth;
  return c;
}

ModelSpec unet_skeleton(const UNetConfig& cfg, const std::string& name) {
  check_unet(cfg);
  ModelSpec spec;
  spec.name = name;
  spec.input_shape = cfg.input;
  spec.tile = cfg.tile;
  return spec;
}

std::vector<std::string> unet_encoder(SpecWriter& w, const UNetConfig& cfg) {
  std::vector<std::string> enc;
  std::string cur = "input";
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string id = "enc" + std::to_string(l);
    cur = w.act(w.sconv(cur, id + "_conv", level_channels(cfg, l), cfg.kernel, l == 0 ? 1 : 2), id, cfg.activation);
    enc.push_back(cur);
  }
  return enc;
}

std::string unet_head(SpecWriter& w, const UNetConfig& cfg, const std::string& in) {
  const std::string h = w.act(w.sconv(in, kHeadConv1, cfg.head_channels, cfg.kernel), "head_act", cfg.activation);
  return w.sconv(h, kHeadConv2, cfg.prediction_channels, cfg.kernel);
}

}  // namespace

ModelSpec build_plain_cnn(const PlainCnnConfig& cfg) {
  if (cfg.depth < 1) throw ShapeError("plain CNN depth must be >= 1");
  if (cfg.channels < 1) throw ShapeError("plain CNN channels must be >= 1");
  ModelSpec spec;
  spec.name = "plain_cnn";
  spec.input_shape = cfg.input;
  spec.tile = cfg.tile;
  SpecWriter w(spec, cfg.threshold, cfg.ema_decay);
  std::string cur = "input";
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string id = "conv" + std::to_string(b);
    const bool sparsify_here = cfg.placement == SparsifyPlacement::EveryConv || b % 2 == 0;
    cur = sparsify_here ? w.sconv(cur, id, cfg.channels, cfg.kernel) : w.conv(cur, id, cfg.channels, cfg.kernel);
    cur = w.act(cur, "relu" + std::to_string(b), Activation::relu());
    if (cfg.pool_every > 0 && (b + 1) % cfg.pool_every == 0 && b + 1 < cfg.depth)
      cur = w.maxpool(cur, "pool" + std::to_string(b));
  }
  spec.output = cur;
  infer_shapes(spec);
  return spec;
}

ModelSpec build_plain_cnn(int depth, int channels, float threshold) {
  PlainCnnConfig cfg;
  cfg.depth = depth;
  cfg.channels = channels;
  cfg.threshold = threshold;
  return build_plain_cnn(cfg);
}

ModelSpec build_unet(const UNetConfig& cfg) {
  ModelSpec spec = unet_skeleton(cfg, "unet");
  SpecWriter w(spec, cfg.threshold, cfg.ema_decay);
  const auto enc = unet_encoder(w, cfg);
  std::string below;
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const std::string id = "dec" + std::to_string(l);
    std::string in = enc[l];
    if (!below.empty()) in = w.concat({w.upsample(below, id + "_up", 2, cfg.upsample), enc[l]}, id + "_cat");
    below = w.act(w.sconv(in, id + "_conv", level_channels(cfg, l), cfg.kernel), id, cfg.activation);
    w.sconv(below, "pred" + std::to_string(l), cfg.prediction_channels, 1);
  }
  spec.output = unet_head(w, cfg, below);
  infer_shapes(spec);
  return spec;
}

ModelSpec build_delayed_unet(const UNetConfig& cfg) {
  ModelSpec spec = unet_skeleton(cfg, "delayed_unet");
  SpecWriter w(spec, cfg.threshold, cfg.ema_decay);
  const auto enc = unet_encoder(w, cfg);
  std::vector<std::string> decoded, predicted;
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const std::string id = "dec" + std::to_string(l);
    const std::string d = w.act(w.sconv(enc[l], id + "_conv", level_channels(cfg, l), cfg.kernel), id, cfg.activation);
    const std::string p = w.sconv(d, "pred" + std::to_string(l), cfg.prediction_channels, 1);
    const int factor = 1 << l;
    decoded.push_back(factor > 1 ? w.upsample(d, id + "_up", factor, cfg.upsample) : d);
    predicted.push_back(factor > 1 ? w.upsample(p, "pred" + std::to_string(l) + "_up", factor, cfg.upsample) : p);
  }
  std::vector<std::string> parts = decoded;
  parts.insert(parts.end(), predicted.begin(), predicted.end());
  spec.output = unet_head(w, cfg, w.concat(parts, "final_cat"));
  infer_shapes(spec);
  return spec;
}

}  // namespace evinc
