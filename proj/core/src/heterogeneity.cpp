#include "phasedfl/heterogeneity.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "phasedfl/errors.hpp"

namespace phasedfl {

namespace {

void check_resource(int client_id, const char* name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError("client " + std::to_string(client_id) + ": " + name + " = " +
                          std::to_string(v) + " outside [0, 1]");
  }
}

}  // namespace

HeterogeneityScore score(const ClientProfile& profile) {
  check_resource(profile.client_id, "compute", profile.compute);
  check_resource(profile.client_id, "storage", profile.storage);
  check_resource(profile.client_id, "bandwidth", profile.bandwidth);
  return {std::min({profile.compute, profile.storage, profile.bandwidth})};
}

PoolAssignment assign_pools(std::span<const ClientProfile> profiles,
                            std::span<const double> fractions) {
  if (profiles.empty()) throw ValidationError("assign_pools: no client profiles");
  if (fractions.empty()) throw ValidationError("assign_pools: no pool fractions");

  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) {
      throw ValidationError("pool fraction " + std::to_string(f) + " must be positive");
    }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("pool fractions sum to " + std::to_string(sum) + ", expected 1");
  }

  std::set<int> seen;
  struct Ranked {
    int id;
    double score;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(profiles.size());
  for (const ClientProfile& p : profiles) {
    if (!seen.insert(p.client_id).second) {
      throw ValidationError("duplicate client id " + std::to_string(p.client_id));
    }
    ranked.push_back({p.client_id, score(p).value});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });

  const std::size_t n = ranked.size();
  PoolAssignment out;
  std::size_t taken = 0;
  for (std::size_t t = 0; t < fractions.size(); ++t) {
    std::size_t count;
    if (t + 1 == fractions.size()) {
      count = n - taken;
    } else {
      count = static_cast<std::size_t>(
          std::floor(static_cast<double>(n) * fractions[t] + 0.5));
      count = std::min(count, n - taken);
    }
    std::vector<int> pool;
    pool.reserve(count);
    for (std::size_t i = taken; i < taken + count; ++i) pool.push_back(ranked[i].id);
    std::sort(pool.begin(), pool.end());
    out.pools.push_back(std::move(pool));
    taken += count;
  }
  return out;
}

std::vector<int> participants(const PoolAssignment& assignment, int phase) {
  if (phase < 1 || static_cast<std::size_t>(phase) > assignment.pools.size()) {
    throw ValidationError("phase " + std::to_string(phase) + " outside [1, " +
                          std::to_string(assignment.pools.size()) + "]");
  }
  std::vector<int> ids;
  for (int t = 0; t < phase; ++t) {
    const auto& pool = assignment.pools[static_cast<std::size_t>(t)];
    ids.insert(ids.end(), pool.begin(), pool.end());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace phasedfl
