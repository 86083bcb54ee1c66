#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "urb/tensor.hpp"

namespace urb {

using NodeId = std::int32_t;

enum class OpKind {
  input,
  affine,
  conv2d,
  relu,
  maxpool2x2,
  flatten,
  softmax_ce,
};

// One recorded operation: parents always reference earlier nodes, so the node
// list is topologically ordered by construction.
struct TapeNode {
  OpKind kind = OpKind::input;
  std::array<NodeId, 3> parents{-1, -1, -1};
  Tensor value;                      // owned forward value
  const Tensor* external = nullptr;  // leaf view into caller-owned storage
  Tensor grad;                       // allocated on first contribution
  bool requires_grad = false;
  int padding = 0;                     // conv2d
  std::vector<std::int32_t> argmax;    // maxpool2x2 backward routing
  std::vector<double> softmax;         // saved probabilities, B*C
  std::vector<int> labels;             // softmax_ce

  const Tensor& val() const { return external ? *external : value; }
};

// Reverse-mode autodiff record. A tape is built fresh for every forward pass
// and backward() visits each node exactly once in reverse order, accumulating
// (summing) gradients into multi-consumer nodes. Leaves added with
// requires_grad=false never receive gradient work, which is how attack-time
// passes skip all parameter-gradient computation.
class Tape {
 public:
  // Owning leaf (copies the tensor in).
  NodeId input(Tensor x, bool requires_grad);
  // Viewing leaf; *x must outlive the tape.
  NodeId input_view(const Tensor* x, bool requires_grad);

  // output[b,o] = sum_i input[b,i] * weight[i,o] + bias[o]
  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  // Cross-correlation with zero padding, stride 1.
  NodeId conv2d(NodeId x, NodeId kernel, NodeId bias, int padding);
  NodeId relu(NodeId x);
  // Non-overlapping 2x2 window max; ties resolved to the lowest linear index
  // so backward routes gradient to exactly one cell.
  NodeId maxpool2x2(NodeId x);
  NodeId flatten(NodeId x);
  // Mean over the batch of -log softmax(logits)[label], stabilized by
  // max-subtraction. Returns a scalar node (shape [1]).
  NodeId softmax_cross_entropy(NodeId logits, const std::vector<int>& labels);

  void backward(NodeId loss);
  bool backward_done() const { return backward_loss_ >= 0; }
  NodeId backward_loss() const { return backward_loss_; }

  const Tensor& value(NodeId id) const { return at(id).val(); }
  const Tensor* grad_if(NodeId id) const;
  // Gradient of the node, or zeros of its shape if it never received one
  // (disconnected inputs).
  Tensor grad_or_zeros(NodeId id) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  TapeNode& at(NodeId id);
  const TapeNode& at(NodeId id) const;
  NodeId push(TapeNode node);
  Tensor& grad_slot(NodeId id);

  std::vector<TapeNode> nodes_;
  NodeId backward_loss_ = -1;
};

// Gradient of a scalar loss with respect to an input node; runs the backward
// pass if it has not happened yet. Parameters are untouched, and a
// disconnected input yields a zero tensor.
Tensor input_gradient(Tape& tape, NodeId loss, NodeId input);

// Forward-only logit utilities shared by the attack and evaluation paths.
std::vector<double> per_example_ce(const Tensor& logits, const std::vector<int>& labels);
// Row-wise argmax; ties resolved to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace urb
