#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "urb/errors.hpp"

namespace urb {

// Dense row-major array of 64-bit floats, the value type of all numerics.
// data.size() always equals the product of the shape extents.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel_of(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape product " +
                           std::to_string(numel_of(shape)));
    }
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  std::size_t numel() const { return data.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Dimension accessor with bounds check, used where a fixed rank is assumed.
  std::size_t dim(std::size_t i) const {
    if (i >= shape.size()) {
      throw DimensionError("tensor rank " + std::to_string(shape.size()) +
                           " has no dimension " + std::to_string(i));
    }
    return shape[i];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace urb
