#pragma once

// Independent oracles for the pruning machinery: exhaustive smallest-magnitude
// selection, plus helpers to wrap raw value vectors into probe models.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "phasedfl/nn.hpp"
#include "phasedfl/rng.hpp"

namespace oracles {

/// Exhaustive reference for mask construction on one tensor: enumerate every
/// entry, keep nonzeros, sort by (|w|, index) and mark the first num_prune.
inline std::vector<std::uint8_t> brute_force_mask(const std::vector<double>& w, double rate) {
  std::vector<std::uint8_t> bits(w.size());
  std::vector<std::pair<double, std::size_t>> nonzeros;
  for (std::size_t i = 0; i < w.size(); ++i) {
    bits[i] = (w[i] != 0.0);
    if (w[i] != 0.0) nonzeros.emplace_back(std::abs(w[i]), i);
  }
  auto num_prune = static_cast<std::size_t>(
      std::floor(rate * static_cast<double>(nonzeros.size())));
  std::sort(nonzeros.begin(), nonzeros.end());
  for (std::size_t i = 0; i < num_prune; ++i) bits[nonzeros[i].second] = 0;
  return bits;
}

/// Single-layer model whose weights hold the given values (bias is one zero).
inline phasedfl::ModelParams probe_model(std::vector<double> values) {
  phasedfl::ModelParams p;
  int n = static_cast<int>(values.size());
  p.layers.push_back({"w", phasedfl::Tensor({n}, std::move(values)),
                      phasedfl::Tensor::zeros({1})});
  return p;
}

/// Random values with a configurable share of exact zeros and duplicated
/// magnitudes, to exercise ties.
inline std::vector<double> random_values(phasedfl::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) {
    double roll = rng.next_double();
    if (roll < 0.25) {
      x = 0.0;
    } else if (roll < 0.45) {
      x = (rng.next_double() < 0.5 ? -1.0 : 1.0) * 0.5;  // shared magnitude
    } else {
      x = rng.uniform(-2.0, 2.0);
    }
  }
  return v;
}

}  // namespace oracles
