#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "urb/models.hpp"
#include "urb/tensor.hpp"

namespace urb {

struct Dataset {
  Tensor inputs;  // N x C x H x W, values in [0, 1]
  std::vector<int> labels;
  std::string split;

  std::size_t size() const { return labels.size(); }
  std::array<std::size_t, 3> input_shape() const;
  Tensor example(std::size_t i) const;  // 1 x C x H x W copy
  int label(std::size_t i) const;
  Dataset take(std::size_t n) const;  // first n examples
};

// IDX (big-endian) image/label pair; pixels scaled to [0,1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split_tag);

// Gaussian-free blob clouds in the unit square: class centers sit on a circle
// sized so adjacent clouds keep a gap of `margin` between their supports;
// each point is its center plus a uniform disc of radius `noise`. Points are
// 1x1x2 images, labels cycle 0..classes-1.
Dataset synth_blobs(std::size_t n, std::size_t classes, double margin, double noise,
                    std::uint64_t seed);

// Two concentric rings (binary labels), radii 0.16 / 0.34 with +/-0.02 radial
// jitter, centered at (0.5, 0.5).
Dataset synth_rings(std::size_t n, std::uint64_t seed);

// Binary checkpoint: magic "URBC", version, architecture descriptor, named
// f64 tensors. Little-endian fixed-width fields; round-trips bitwise.
void save_checkpoint(const ParameterSet& params, const ModelSpec& spec, const std::string& path);
std::pair<ParameterSet, ModelSpec> load_checkpoint(const std::string& path);

}  // namespace urb
