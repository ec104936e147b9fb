#pragma once

#include <cstddef>
#include <vector>

#include "phasedfl/mask.hpp"
#include "phasedfl/nn.hpp"

namespace phasedfl {

/// Fraction of the currently nonzero weights to zero in one sparsification
/// event, in [0, 1].
struct PruneRate {
  double value = 0.0;
  explicit PruneRate(double v);
};

enum class PruneGranularity {
  PerTensor,  // rank magnitudes within each parameter tensor
  Global,     // rank magnitudes over the flattened model
};

/// Cumulative zero-fraction target per phase: non-decreasing, phase 1 dense.
struct SparsitySchedule {
  std::vector<double> targets;
  static SparsitySchedule validated(std::vector<double> targets);
};

/// Zero entries after pruning: (total - nonzero) + floor(rate * nonzero).
std::size_t prune_count(std::size_t total, std::size_t nonzero, PruneRate rate);

/// Masks every existing zero plus the num_prune smallest-magnitude nonzero
/// entries per granularity unit; magnitude ties break by ascending flat index.
PruneMask build_mask(const ModelParams& params, PruneRate rate,
                     PruneGranularity granularity = PruneGranularity::PerTensor);

/// Incremental rate that takes a model from current to target cumulative
/// sparsity: (target - current) / (1 - current).
PruneRate rate_for_target(double current_sparsity, double target_sparsity);

/// Surviving coordinates take their original initialization values; pruned
/// coordinates become exactly 0.
ModelParams lth_reset(const ModelParams& initial, const PruneMask& mask);

/// params .* mask; idempotent.
ModelParams apply_mask(const ModelParams& params, const PruneMask& mask);

/// Elementwise AND; shapes must agree.
PruneMask intersect_masks(const PruneMask& a, const PruneMask& b);

/// All-ones mask aligned with the given model.
PruneMask ones_like(const ModelParams& params);

/// Throws ProtocolError unless the mask aligns tensor-by-tensor with params.
void check_mask(const ModelParams& params, const PruneMask& mask);

}  // namespace phasedfl
