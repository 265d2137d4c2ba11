#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pira/rng.h"
#include "pira/tensor.h"

namespace pira {

using NodeId = int32_t;

enum class DropoutMode { stochastic, deterministic };

// Reverse-mode tape over float32 tensors. Nodes are appended in execution
// order, so ids are already a topological order; each node is produced
// exactly once and never mutated after recording. Every primitive checks
// its output for NaN/Inf and throws NumericError on failure.
//
// Reductions (sum, softmax normalization, layer-norm statistics, matmul
// contractions) accumulate in double and round once to float32.
class Tape {
 public:
  // Leaves. `constant` never receives a gradient; `param` does.
  NodeId constant(Tensor v);
  NodeId param(Tensor v);

  // [m x k] @ [k x n] -> [m x n]
  NodeId matmul(NodeId a, NodeId b);
  // Same shape, or `b` a length-n bias broadcast over the rows of `a`.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0f)); }
  NodeId mul(NodeId a, NodeId b);  // elementwise, same shape
  NodeId scale(NodeId a, float s);
  NodeId tanh_op(NodeId a);
  NodeId gelu(NodeId a);
  NodeId logistic(NodeId a);
  NodeId softplus(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, float eps = 1e-5f);
  NodeId embedding_gather(NodeId table, std::vector<int32_t> ids);
  // Inverted dropout: stochastic mode zeroes each element with probability
  // `rate` and scales survivors by 1/(1-rate); deterministic mode is the
  // identity. rate==0 never consumes draws from `rng`.
  NodeId dropout(NodeId x, float rate, CounterRng& rng,
                 DropoutMode mode = DropoutMode::stochastic);
  NodeId concat_cols(const std::vector<NodeId>& xs);
  NodeId slice_cols(NodeId x, int c0, int c1);
  NodeId slice_rows(NodeId x, int r0, int r1);
  NodeId transpose(NodeId x);
  NodeId index_last(NodeId x);  // last row of [T x d] -> [d]
  NodeId sum(NodeId x);         // all elements -> scalar

  // Accumulates d(seed)/d(node) into every grad-bearing node. `seed`
  // must be scalar (ContractError otherwise). May be called once per tape.
  void backward(NodeId seed);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  // Zero tensor if the node received no gradient.
  const Tensor& grad(NodeId id);
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward()
    bool requires_grad = false;
    const char* op = "";
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  NodeId push(Tensor v, bool requires_grad, const char* op,
              std::function<void(Tape&)> backprop);
  Tensor& grad_buf(NodeId id);
  void add_grad(NodeId id, const Tensor& g);

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace pira
