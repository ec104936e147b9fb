#include "phasedfl/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phasedfl/errors.hpp"

namespace phasedfl {

PruneRate::PruneRate(double v) : value(v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError("prune rate must be in [0, 1], got " + std::to_string(v));
  }
}

SparsitySchedule SparsitySchedule::validated(std::vector<double> targets) {
  if (targets.empty()) throw ValidationError("schedule must have at least one phase");
  if (targets.front() != 0.0) {
    throw ValidationError("schedule must start dense (first target 0), got " +
                          std::to_string(targets.front()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(targets[i] >= 0.0 && targets[i] < 1.0)) {
      throw ValidationError("schedule entry " + std::to_string(i + 1) + " = " +
                            std::to_string(targets[i]) + " outside [0, 1)");
    }
    if (i > 0 && targets[i] < targets[i - 1]) {
      throw ValidationError("schedule not monotone");
    }
  }
  return SparsitySchedule{std::move(targets)};
}

std::size_t prune_count(std::size_t total, std::size_t nonzero, PruneRate rate) {
  if (nonzero > total) {
    throw ValidationError("nonzero count " + std::to_string(nonzero) + " exceeds total " +
                          std::to_string(total));
  }
  auto pruned = static_cast<std::size_t>(
      std::floor(rate.value * static_cast<double>(nonzero)));
  return (total - nonzero) + pruned;
}

void check_mask(const ModelParams& params, const PruneMask& mask) {
  if (mask.entries.size() != params.tensor_count()) {
    throw ProtocolError("mask has " + std::to_string(mask.entries.size()) +
                        " entries, model has " + std::to_string(params.tensor_count()) +
                        " parameter tensors");
  }
  for (std::size_t i = 0; i < mask.entries.size(); ++i) {
    if (mask.entries[i].shape != params.tensor_at(i).shape) {
      throw ProtocolError("mask shape " + shape_str(mask.entries[i].shape) +
                          " does not match tensor '" + params.tensor_name(i) + "' shape " +
                          shape_str(params.tensor_at(i).shape));
    }
  }
}

PruneMask ones_like(const ModelParams& params) {
  PruneMask mask;
  mask.entries.reserve(params.tensor_count());
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const Tensor& t = params.tensor_at(i);
    mask.entries.push_back({t.shape, std::vector<std::uint8_t>(t.size(), 1)});
  }
  return mask;
}

namespace {

// nonzero indicator of one tensor
BinaryTensor indicator(const Tensor& t) {
  BinaryTensor b{t.shape, std::vector<std::uint8_t>(t.size(), 0)};
  for (std::size_t i = 0; i < t.size(); ++i) b.bits[i] = (t[i] != 0.0);
  return b;
}

// zeroes the first `keep_out` entries of `bits` in order of (|w|, index)
void mask_smallest(const std::vector<double>& values, std::size_t count,
                   std::vector<std::uint8_t>& bits) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(values[a]) < std::abs(values[b]);
  });
  for (std::size_t i = 0; i < count && i < order.size(); ++i) bits[order[i]] = 0;
}

}  // namespace

PruneMask build_mask(const ModelParams& params, PruneRate rate,
                     PruneGranularity granularity) {
  PruneMask mask;
  mask.entries.reserve(params.tensor_count());

  if (granularity == PruneGranularity::PerTensor) {
    for (std::size_t ti = 0; ti < params.tensor_count(); ++ti) {
      const Tensor& t = params.tensor_at(ti);
      BinaryTensor entry = indicator(t);
      std::size_t num_zeros = t.size() - entry.active_count();
      std::size_t num_nonzeros = t.size() - num_zeros;
      auto num_prune = static_cast<std::size_t>(
          std::floor(rate.value * static_cast<double>(num_nonzeros)));
      if (num_prune > 0) {
        mask_smallest(t.values, num_zeros + num_prune, entry.bits);
      }
      mask.entries.push_back(std::move(entry));
    }
    return mask;
  }

  // global: rank magnitudes over one flattened view of every tensor
  std::vector<double> flat;
  flat.reserve(params.total_count());
  for (std::size_t ti = 0; ti < params.tensor_count(); ++ti) {
    const Tensor& t = params.tensor_at(ti);
    flat.insert(flat.end(), t.values.begin(), t.values.end());
  }
  std::vector<std::uint8_t> bits(flat.size(), 0);
  std::size_t num_nonzeros = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    bits[i] = (flat[i] != 0.0);
    num_nonzeros += bits[i];
  }
  std::size_t num_zeros = flat.size() - num_nonzeros;
  auto num_prune = static_cast<std::size_t>(
      std::floor(rate.value * static_cast<double>(num_nonzeros)));
  if (num_prune > 0) {
    mask_smallest(flat, num_zeros + num_prune, bits);
  }

  std::size_t offset = 0;
  for (std::size_t ti = 0; ti < params.tensor_count(); ++ti) {
    const Tensor& t = params.tensor_at(ti);
    BinaryTensor entry{t.shape,
                       std::vector<std::uint8_t>(bits.begin() + static_cast<std::ptrdiff_t>(offset),
                                                 bits.begin() + static_cast<std::ptrdiff_t>(offset + t.size()))};
    offset += t.size();
    mask.entries.push_back(std::move(entry));
  }
  return mask;
}

PruneRate rate_for_target(double current_sparsity, double target_sparsity) {
  if (!(current_sparsity >= 0.0 && current_sparsity < 1.0)) {
    throw ValidationError("current sparsity " + std::to_string(current_sparsity) +
                          " outside [0, 1)");
  }
  if (!(target_sparsity < 1.0)) {
    throw ValidationError("target sparsity " + std::to_string(target_sparsity) +
                          " outside [0, 1)");
  }
  if (target_sparsity < current_sparsity) {
    throw ValidationError("schedule not monotone");
  }
  double rate = (target_sparsity - current_sparsity) / (1.0 - current_sparsity);
  return PruneRate(std::clamp(rate, 0.0, 1.0));
}

ModelParams lth_reset(const ModelParams& initial, const PruneMask& mask) {
  return apply_mask(initial, mask);
}

ModelParams apply_mask(const ModelParams& params, const PruneMask& mask) {
  check_mask(params, mask);
  ModelParams out = params;
  for (std::size_t ti = 0; ti < out.tensor_count(); ++ti) {
    Tensor& t = out.tensor_at(ti);
    const BinaryTensor& m = mask.entries[ti];
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!m.bits[i]) t[i] = 0.0;
    }
  }
  return out;
}

PruneMask intersect_masks(const PruneMask& a, const PruneMask& b) {
  if (a.entries.size() != b.entries.size()) {
    throw ProtocolError("cannot intersect masks with " + std::to_string(a.entries.size()) +
                        " and " + std::to_string(b.entries.size()) + " entries");
  }
  PruneMask out = a;
  for (std::size_t ti = 0; ti < out.entries.size(); ++ti) {
    if (out.entries[ti].shape != b.entries[ti].shape) {
      throw ProtocolError("mask entry " + std::to_string(ti) + " shapes differ: " +
                          shape_str(out.entries[ti].shape) + " vs " +
                          shape_str(b.entries[ti].shape));
    }
    for (std::size_t i = 0; i < out.entries[ti].bits.size(); ++i) {
      out.entries[ti].bits[i] &= b.entries[ti].bits[i];
    }
  }
  return out;
}

}  // namespace phasedfl
