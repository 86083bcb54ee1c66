#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "urb/autodiff.hpp"
#include "urb/tensor.hpp"

namespace urb {

enum class Arch { mlp, mnist_cnn };

// Architecture descriptor. Serialized into checkpoints so attack/eval
// commands can rebuild the exact network without any model flags.
struct ModelSpec {
  Arch arch = Arch::mnist_cnn;
  std::array<std::size_t, 3> input{1, 28, 28};  // C, H, W
  std::size_t classes = 10;
  std::vector<std::size_t> hidden{100};            // mlp layer widths
  std::size_t conv1 = 32, conv2 = 64, fc = 1024;   // mnist_cnn widths

  std::size_t input_numel() const { return input[0] * input[1] * input[2]; }
  // Canonical parameter list: (name, shape) in forward order. This is the
  // single source of truth for init, checkpoints, and optimizers.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> param_shapes() const;
  std::string descriptor() const;
  static ModelSpec parse_descriptor(const std::string& text);
};

struct ParameterSet {
  std::vector<std::pair<std::string, Tensor>> entries;

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::size_t param_count() const;
};

// Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases; the draw order
// is the canonical param_shapes order, elementwise.
ParameterSet init_params(const ModelSpec& spec, std::uint64_t seed);

struct ForwardHandles {
  NodeId input = -1;
  NodeId logits = -1;
  std::vector<NodeId> params;  // aligned with ParameterSet entries
};

// Records the forward pass on the tape. *x must stay alive for the tape's
// lifetime; x_grad / params_grad control which leaves participate in
// backward.
ForwardHandles model_forward(const ModelSpec& spec, const ParameterSet& params, Tape& tape,
                             const Tensor* x, bool x_grad, bool params_grad);

// Forward-only logits on a throwaway tape.
Tensor model_logits(const ModelSpec& spec, const ParameterSet& params, const Tensor& x);

}  // namespace urb
