#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "phasedfl/tensor.hpp"

namespace phasedfl {

/// One binary tensor of a prune mask; 1 keeps a weight, 0 disables it and
/// blocks its gradient.
struct BinaryTensor {
  std::vector<int> shape;
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (std::uint8_t b : bits) n += (b != 0);
    return n;
  }
};

/// Binary tensors aligned one-to-one with the parameter tensors of a model,
/// in tensor order (layer 0 weights, layer 0 bias, layer 1 weights, ...).
struct PruneMask {
  std::vector<BinaryTensor> entries;

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.size();
    return n;
  }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.active_count();
    return n;
  }

  std::size_t zero_count() const { return total_count() - active_count(); }

  /// 1 - active/total, in [0, 1].
  double sparsity() const {
    std::size_t total = total_count();
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(active_count()) / static_cast<double>(total);
  }
};

}  // namespace phasedfl
