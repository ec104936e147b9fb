#pragma once

#include <span>
#include <vector>

namespace phasedfl {

/// Per-node resources, normalized to [0, 1] against what the dense model
/// needs. Heterogeneity is treated as known a priori; nothing is measured.
struct ClientProfile {
  int client_id = 0;
  double compute = 0.0;
  double storage = 0.0;
  double bandwidth = 0.0;
};

/// Resource bottleneck of a node: the minimum of its three capacities.
struct HeterogeneityScore {
  double value = 0.0;
};

HeterogeneityScore score(const ClientProfile& profile);

/// Disjoint client pools ordered from the most to the least capable tier;
/// tier t onboards at phase t + 1.
struct PoolAssignment {
  std::vector<std::vector<int>> pools;  // each sorted by ascending client id
};

/// Splits clients by descending score (ties by ascending id) into pools of
/// round-half-up fractional sizes; the final pool absorbs the remainder.
PoolAssignment assign_pools(std::span<const ClientProfile> profiles,
                            std::span<const double> fractions);

/// Cumulative participants for a phase: the union of pools 1..phase,
/// sorted by ascending client id.
std::vector<int> participants(const PoolAssignment& assignment, int phase);

}  // namespace phasedfl
