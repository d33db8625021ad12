#pragma once

#include <string>
#include <vector>

#include "evinc/increment_ops.hpp"
#include "evinc/model_spec.hpp"
#include "evinc/sparsify.hpp"
#include "evinc/weights.hpp"

namespace evinc {

struct NodeFlops {
  std::string id;
  OpKind op;
  FlopCounter flops;
};

struct FlopReport {
  std::vector<NodeFlops> nodes;
  FlopCounter total;

  /// 100 * (1 - performed / dense_equiv); 0 when nothing was counted.
  double reduction_percent() const;
};

struct NodeSparsity {
  std::string id;
  OpKind op;
  double input_false_fraction = 0.0;   // over all tiles of all inputs
  double output_false_fraction = 0.0;
};

struct StepResult {
  IncrementTensor y_increment;
  Tensor y;  // integrated output
  FlopReport flops;  // this step only
  std::vector<NodeSparsity> sparsity;
  bool refresh_due = false;
};

/// Per-node mutable state: accumulators of nonlinear nodes (one per input)
/// and the residual of sparsify nodes.
struct NodeState {
  std::vector<AccState> acc;
  SparsifyState sparsify;
};

/// A compiled model plus one inference session's state.
///
/// Lifecycle: dense_pass (or refresh) initializes every accumulator from a
/// full forward pass; incr_step then pushes input increments through the
/// increment operators and folds the output increments into y. After
/// `refresh_interval` steps the step result flags refresh_due; the caller
/// answers with refresh(x) using the current dense input.
class Graph {
 public:
  Graph(const ModelSpec& spec, const WeightSet& weights);

  Tensor dense_pass(const Tensor& x);
  StepResult incr_step(const IncrementTensor& dx);
  Tensor refresh(const Tensor& x) { return dense_pass(x); }

  /// Stateless dense forward; the oracle for every incremental result.
  Tensor evaluate(const Tensor& x) const;
  /// Dense outputs of every node, keyed by position in execution order.
  std::vector<Tensor> evaluate_all(const Tensor& x) const;

  /// max |y - oracle_y|.
  float drift(const Tensor& oracle_y) const;

  FlopReport flop_report() const;
  /// FLOPs of one dense pass (performed == dense_equiv).
  FlopCounter dense_pass_flops() const;
  void reset_flop_counters();

  void set_refresh_interval(int n) { refresh_interval_ = n; }  // 0 = never
  int refresh_interval() const { return refresh_interval_; }
  bool refresh_due() const { return refresh_interval_ > 0 && steps_since_refresh_ >= refresh_interval_; }
  int steps_since_refresh() const { return steps_since_refresh_; }
  bool initialized() const { return initialized_; }

  const Tensor& output() const { return y_; }
  const ModelSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return spec_.input_shape; }
  const Shape& output_shape() const;
  const TileShape& tile() const { return spec_.tile; }

  /// Node ids in execution order.
  std::vector<std::string> execution_order() const;
  const Shape& node_shape(const std::string& id) const;
  const NodeState& state(const std::string& id) const;
  std::size_t parameter_count() const;

 private:
  struct Node {
    NodeSpec spec;
    std::vector<int> inputs;  // positions in nodes_, -1 for the graph input
    Shape shape;
    ConvFilter filter;
    Eigen::VectorXf bias;
    Eigen::MatrixXf matrix;
    NodeState state;
    FlopCounter flops;
  };

  int position(const std::string& id) const;
  Tensor forward_node(const Node& n, const std::vector<const Tensor*>& in) const;
  IncrementTensor increment_node(Node& n, const std::vector<const IncrementTensor*>& in, FlopCounter& meter);

  ModelSpec spec_;
  std::vector<Node> nodes_;
  int output_pos_ = -1;
  Tensor y_;
  int steps_since_refresh_ = 0;
  int refresh_interval_ = 64;
  bool initialized_ = false;
};

}  // namespace evinc
