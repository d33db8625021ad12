#include "evinc/graph.hpp"

#include <numeric>

namespace evinc {

double FlopReport::reduction_percent() const {
  if (total.dense_equiv == 0) return 0.0;
  return 100.0 * (1.0 - double(total.performed) / double(total.dense_equiv));
}

namespace {

const WeightTensor& lookup(const WeightSet& w, const std::string& name, const std::vector<int>& shape) {
  auto it = w.find(name);
  if (it == w.end()) throw MissingWeightError("missing weight '" + name + "'");
  if (it->second.shape != shape) {
    std::string want, got;
    for (int d : shape) want += (want.empty() ? "" : ",") + std::to_string(d);
    for (int d : it->second.shape) got += (got.empty() ? "" : ",") + std::to_string(d);
    throw ShapeError("weight '" + name + "' has shape (" + got + "), model needs (" + want + ")");
  }
  return it->second;
}

TileShape flat_tile(const TileShape& t) { return {1, t.h * t.w}; }

}  // namespace

Graph::Graph(const ModelSpec& spec, const WeightSet& weights) : spec_(spec) {
  const auto order = topological_order(spec_);
  const auto shapes = infer_shapes(spec_);
  std::vector<int> pos_of(spec_.nodes.size(), -1);
  for (int p = 0; p < int(order.size()); ++p) pos_of[order[p]] = p;
  std::map<std::string, int> by_id;
  for (int i = 0; i < int(spec_.nodes.size()); ++i) by_id[spec_.nodes[i].id] = pos_of[i];

  const auto required = required_weights(spec_);
  auto need = [&](const std::string& name) -> const WeightTensor& {
    for (const auto& r : required)
      if (r.name == name) return lookup(weights, name, r.shape);
    throw MissingWeightError("no weight requirement for '" + name + "'");
  };

  for (int idx : order) {
    Node n;
    n.spec = spec_.nodes[idx];
    n.shape = shapes.at(n.spec.id);
    for (const auto& in : n.spec.inputs) n.inputs.push_back(in == spec_.input_id ? -1 : by_id.at(in));
    const Shape in0 = shapes.at(n.spec.inputs[0]);
    switch (n.spec.op) {
      case OpKind::Conv: {
        const auto& w = need(n.spec.id + ".weight");
        n.filter = ConvFilter(n.spec.out_channels, in0.channels, n.spec.kernel, n.spec.kernel, w.values);
        if (n.spec.bias) n.bias = need(n.spec.id + ".bias").values.matrix();
        break;
      }
      case OpKind::Linear: {
        const auto& w = need(n.spec.id + ".weight");
        // Stored row-major (out, in).
        n.matrix = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.values.data(), n.spec.out_channels, Eigen::Index(in0.size()));
        if (n.spec.bias) n.bias = need(n.spec.id + ".bias").values.matrix();
        break;
      }
      case OpKind::Activation:
      case OpKind::MaxPool: n.state.acc.resize(1); break;
      case OpKind::Mul: n.state.acc.resize(2); break;
      case OpKind::Sparsify: n.state.sparsify = SparsifyState::make(in0, n.spec.threshold, n.spec.ema_decay); break;
      default: break;
    }
    for (std::size_t k = 0; k < n.state.acc.size(); ++k)
      n.state.acc[k].x_acc = Tensor(shapes.at(n.spec.inputs[k]));
    nodes_.push_back(std::move(n));
  }
  output_pos_ = spec_.output == spec_.input_id ? -1 : by_id.at(spec_.output);
  y_ = Tensor(output_shape());
}

const Shape& Graph::output_shape() const { return output_pos_ < 0 ? spec_.input_shape : nodes_[output_pos_].shape; }

int Graph::position(const std::string& id) const {
  for (int p = 0; p < int(nodes_.size()); ++p)
    if (nodes_[p].spec.id == id) return p;
  throw Error("no node '" + id + "'");
}

std::vector<std::string> Graph::execution_order() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) out.push_back(n.spec.id);
  return out;
}

const Shape& Graph::node_shape(const std::string& id) const {
  if (id == spec_.input_id) return spec_.input_shape;
  return nodes_[position(id)].shape;
}

const NodeState& Graph::state(const std::string& id) const { return nodes_[position(id)].state; }

std::size_t Graph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_)
    n += std::size_t(node.filter.array().size()) + std::size_t(node.matrix.size()) + std::size_t(node.bias.size());
  return n;
}

Tensor Graph::forward_node(const Node& n, const std::vector<const Tensor*>& in) const {
  switch (n.spec.op) {
    case OpKind::Conv: return dense_conv2d(*in[0], n.filter, n.bias, ConvParams{n.spec.stride, n.spec.padding});
    case OpKind::Activation: return dense_activation(*in[0], n.spec.activation);
    case OpKind::Add: return dense_add(*in[0], *in[1]);
    case OpKind::Mul: return dense_mul(*in[0], *in[1]);
    case OpKind::Concat: return dense_concat(in);
    case OpKind::Upsample: return dense_upsample(*in[0], n.spec.factor, n.spec.mode);
    case OpKind::MaxPool: return dense_maxpool(*in[0], n.spec.window, n.spec.stride);
    case OpKind::Sparsify: return *in[0];
    case OpKind::Linear: return dense_linear(*in[0], n.matrix, n.bias);
  }
  throw Error("unhandled op");
}

std::vector<Tensor> Graph::evaluate_all(const Tensor& x) const {
  if (x.shape() != spec_.input_shape)
    throw ShapeError("model input is " + to_string(spec_.input_shape) + ", got " + to_string(x.shape()));
  std::vector<Tensor> out(nodes_.size());
  std::vector<const Tensor*> in;
  for (std::size_t p = 0; p < nodes_.size(); ++p) {
    in.clear();
    for (int src : nodes_[p].inputs) in.push_back(src < 0 ? &x : &out[src]);
    out[p] = forward_node(nodes_[p], in);
  }
  return out;
}

Tensor Graph::evaluate(const Tensor& x) const {
  if (output_pos_ < 0) return x;
  auto all = evaluate_all(x);
  return std::move(all[output_pos_]);
}

Tensor Graph::dense_pass(const Tensor& x) {
  const auto out = evaluate_all(x);
  for (std::size_t p = 0; p < nodes_.size(); ++p) {
    Node& n = nodes_[p];
    auto input = [&](std::size_t k) -> const Tensor& { return n.inputs[k] < 0 ? x : out[n.inputs[k]]; };
    for (std::size_t k = 0; k < n.state.acc.size(); ++k) n.state.acc[k].x_acc = input(k);
    if (n.spec.op == OpKind::Sparsify) reset(n.state.sparsify, input(0));
    std::uint64_t flops = 0;
    if (n.spec.op == OpKind::Conv)
      flops = conv_dense_flops(input(0).shape(), n.filter, ConvParams{n.spec.stride, n.spec.padding});
    else if (n.spec.op == OpKind::Linear)
      flops = 2ull * std::uint64_t(n.matrix.rows()) * std::uint64_t(n.matrix.cols());
    n.flops.performed += flops;
    n.flops.dense_equiv += flops;
  }
  y_ = output_pos_ < 0 ? x : out[output_pos_];
  steps_since_refresh_ = 0;
  initialized_ = true;
  return y_;
}

IncrementTensor Graph::increment_node(Node& n, const std::vector<const IncrementTensor*>& in, FlopCounter& meter) {
  switch (n.spec.op) {
    case OpKind::Conv: return inc_conv2d(*in[0], n.filter, ConvParams{n.spec.stride, n.spec.padding}, meter);
    case OpKind::Activation: return inc_activation(*in[0], n.state.acc[0], n.spec.activation);
    case OpKind::Add: return inc_add(*in[0], *in[1]);
    case OpKind::Mul: return inc_mul(*in[0], *in[1], n.state.acc[0], n.state.acc[1]);
    case OpKind::Concat: return inc_concat(in);
    case OpKind::Upsample: return inc_upsample(*in[0], n.spec.factor, n.spec.mode);
    case OpKind::MaxPool: return inc_maxpool(*in[0], n.state.acc[0], n.spec.window, n.spec.stride);
    case OpKind::Sparsify: return sparsify_step(*in[0], n.state.sparsify);
    case OpKind::Linear: {
      const Shape flat{1, 1, int(in[0]->values.size())};
      auto x = IncrementTensor::from_values(Tensor(flat, in[0]->values.array()), flat_tile(spec_.tile));
      auto y = inc_linear(x, n.matrix, meter);
      return IncrementTensor(std::move(y.values), TileMask(n.shape, spec_.tile, y.mask.any()));
    }
  }
  throw Error("unhandled op");
}

StepResult Graph::incr_step(const IncrementTensor& dx) {
  if (!initialized_) throw StateError("incr_step called before any dense pass");
  if (dx.shape() != spec_.input_shape)
    throw ShapeError("model input is " + to_string(spec_.input_shape) + ", increment is " + to_string(dx.shape()));
  if (dx.tile() != spec_.tile) throw ShapeError("increment tile shape differs from the model's");

  StepResult result;
  std::vector<IncrementTensor> out(nodes_.size());
  std::vector<const IncrementTensor*> in;
  for (std::size_t p = 0; p < nodes_.size(); ++p) {
    Node& n = nodes_[p];
    in.clear();
    std::size_t in_tiles = 0, in_true = 0;
    for (int src : n.inputs) {
      const IncrementTensor* t = src < 0 ? &dx : &out[src];
      in.push_back(t);
      in_tiles += t->mask.size();
      in_true += t->mask.count_true();
    }
    FlopCounter meter;
    out[p] = increment_node(n, in, meter);
    n.flops += meter;
    result.flops.nodes.push_back({n.spec.id, n.spec.op, meter});
    result.flops.total += meter;
    result.sparsity.push_back({n.spec.id, n.spec.op, in_tiles ? 1.0 - double(in_true) / double(in_tiles) : 1.0,
                               out[p].mask.false_fraction()});
  }
  result.y_increment = output_pos_ < 0 ? dx : std::move(out[output_pos_]);
  integrate_inplace(y_, result.y_increment);
  result.y = y_;
  ++steps_since_refresh_;
  result.refresh_due = refresh_due();
  return result;
}

float Graph::drift(const Tensor& oracle_y) const { return max_abs_diff(y_, oracle_y); }

FlopReport Graph::flop_report() const {
  FlopReport r;
  for (const auto& n : nodes_) {
    r.nodes.push_back({n.spec.id, n.spec.op, n.flops});
    r.total += n.flops;
  }
  return r;
}

FlopCounter Graph::dense_pass_flops() const {
  FlopCounter c;
  for (const auto& n : nodes_) {
    std::uint64_t f = 0;
    if (n.spec.op == OpKind::Conv) {
      const Shape in = n.inputs[0] < 0 ? spec_.input_shape : nodes_[n.inputs[0]].shape;
      f = conv_dense_flops(in, n.filter, ConvParams{n.spec.stride, n.spec.padding});
    } else if (n.spec.op == OpKind::Linear) {
      f = 2ull * std::uint64_t(n.matrix.rows()) * std::uint64_t(n.matrix.cols());
    }
    c.performed += f;
    c.dense_equiv += f;
  }
  return c;
}

void Graph::reset_flop_counters() {
  for (auto& n : nodes_) n.flops = {};
}

}  // namespace evinc
