#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sashimi/tensor.hpp"

namespace sashimi::ad {

using NodeId = std::size_t;

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Receives dLoss/dOutput and accumulates into the gradient buffers of the
// inputs. A null buffer means that input does not need a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

// Append-only reverse-mode tape. Nodes are stored in creation order, so every
// node's inputs precede it and a reverse sweep is a valid topological order.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(std::string op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a scalar loss for every leaf created with requires_grad.
  // Leaves that do not reach the loss receive zeros.
  std::map<NodeId, Tensor> backward(Var loss);

  // Number of backward closures run by the last backward() call.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
};

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var sum(Var a);
// x: [T, in], w: [in, out], b: [out] (b.tape == nullptr for no bias).
Var linear(Var x, Var w, Var b);
// Per-row normalization over the last dimension of a [T, H] input.
Var layer_norm(Var x, Var gain, Var bias);
Var gelu(Var x);
// [T, 2k] -> [T, k]: first half times sigmoid(second half).
Var glu(Var x);
Var embedding(Var table, std::span<const std::uint8_t> tokens);
Var reshape(Var x, Shape shape);
// out[t] = x[t - k] for t >= k, zero rows before.
Var shift_rows(Var x, std::size_t k);
Var reverse_rows(Var x);
Var concat_cols(Var a, Var b);
// Mean over rows of -log2 softmax(logits[t])[targets[t]].
Var nll_bits(Var logits, std::span<const std::uint8_t> targets);

}  // namespace sashimi::ad
