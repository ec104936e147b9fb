#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "phasedfl/errors.hpp"

namespace phasedfl {

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

/// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> shape_in, std::vector<double> values_in)
      : shape(std::move(shape_in)), values(std::move(values_in)) {
    for (int d : shape) {
      if (d <= 0) throw ValidationError("tensor dimension must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw ValidationError("tensor shape " + shape_str(shape) + " does not match " +
                            std::to_string(values.size()) + " values");
    }
  }

  static Tensor zeros(std::vector<int> shape_in) {
    std::size_t n = shape_numel(shape_in);
    return Tensor(std::move(shape_in), std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline std::size_t nonzero_count(const Tensor& t) {
  std::size_t n = 0;
  for (double v : t.values) n += (v != 0.0);
  return n;
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace phasedfl
