#pragma once

#include <optional>
#include <vector>

#include "phasedfl/config.hpp"
#include "phasedfl/data.hpp"
#include "phasedfl/heterogeneity.hpp"
#include "phasedfl/metrics.hpp"
#include "phasedfl/nn.hpp"
#include "phasedfl/rng.hpp"
#include "phasedfl/sparsify.hpp"

namespace phasedfl {

struct ClientState {
  int client_id = -1;
  ModelParams local_params;
  DatasetShard shard;
};

struct PhasePlan {
  std::vector<int> rounds;
  std::vector<double> target_sparsity;  // cumulative, validated non-decreasing
};

struct ServerState {
  int round = 0;
  int phase = 1;
  ModelParams global_params;
  ModelParams initial_params;  // retained for the reset at each sparsification
  std::optional<PruneMask> mask;
  int flag = 1;  // gates sparsification: one increment per event
  int k = 2;
  Rng rng;
};

ServerState init_server(const Architecture& arch, std::uint64_t seed, int k,
                        std::uint64_t selection_seed);

struct Hyperparams {
  double alpha = 0.01;
  int epochs = 1;
  int batch_size = 32;
  bool weighted_aggregation = false;
  bool aggregate_all = false;
};

/// One client round: re-initialize from the broadcast weights, then run
/// mini-batch SGD over the shard, masked when a mask is present.
ModelParams local_round(const ClientState& client, const ModelParams& global_params,
                        const PruneMask* mask, const Architecture& arch, double alpha,
                        int epochs, int batch_size);

/// k distinct ids drawn uniformly without replacement, in draw order.
std::vector<int> select_clients(const std::vector<int>& participants, int k, Rng& rng);

/// Arithmetic mean of the updates, or the shard-size weighted sum.
ModelParams aggregate(const std::vector<std::pair<ModelParams, std::size_t>>& updates,
                      bool weighted);

/// One communication round: every participant trains from the broadcast
/// weights, the server aggregates k of them, re-applies the mask, evaluates
/// and appends a metrics row.
RoundRecord server_round(ServerState& state, const Architecture& arch,
                         std::vector<ClientState>& clients,
                         const std::vector<int>& participant_ids,
                         const LabeledDataset& test_set, const Hyperparams& hp,
                         bool record_timing);

/// Sparsification event between phases: ranks the trained magnitudes, extends
/// the mask, resets survivors to their initialization values and bumps flag.
void phase_transition(ServerState& state, int next_phase, double target_sparsity,
                      PruneGranularity granularity);

struct PhaseSummary {
  int phase = 0;
  int participants = 0;
  int rounds = 0;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  double sparsity = 0.0;
  double speedup = 1.0;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::vector<PhaseSummary> phases;
  SizeReport size_report;
  int final_flag = 1;
  bool mask_present = false;
};

/// Executes every phase of the configured experiment.
RunResult run_experiment(const ExperimentConfig& config);

}  // namespace phasedfl
