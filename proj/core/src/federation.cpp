#include "phasedfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "phasedfl/errors.hpp"

namespace phasedfl {

namespace {

// seed streams of one experiment, fixed for reproducibility
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamData = 2;
constexpr std::uint64_t kStreamPartition = 3;
constexpr std::uint64_t kStreamProfiles = 4;
constexpr std::uint64_t kStreamSelect = 5;

ClientState* find_client(std::vector<ClientState>& clients, int id) {
  auto it = std::lower_bound(clients.begin(), clients.end(), id,
                             [](const ClientState& c, int v) { return c.client_id < v; });
  if (it == clients.end() || it->client_id != id) {
    throw ConfigError("no client with id " + std::to_string(id));
  }
  return &*it;
}

double model_sparsity(const ModelParams& params) {
  std::size_t total = params.total_count();
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(params.nonzero_count()) / static_cast<double>(total);
}

}  // namespace

ServerState init_server(const Architecture& arch, std::uint64_t seed, int k,
                        std::uint64_t selection_seed) {
  ModelParams initial = init_params(arch, seed);
  return ServerState{
      .round = 0,
      .phase = 1,
      .global_params = initial,
      .initial_params = std::move(initial),
      .mask = std::nullopt,
      .flag = 1,
      .k = k,
      .rng = Rng(selection_seed),
  };
}

ModelParams local_round(const ClientState& client, const ModelParams& global_params,
                        const PruneMask* mask, const Architecture& arch, double alpha,
                        int epochs, int batch_size) {
  if (client.shard.examples.empty()) {
    throw ValidationError("client " + std::to_string(client.client_id) + " has an empty shard");
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (mask != nullptr) check_mask(global_params, *mask);

  ModelParams params = global_params;
  const auto& examples = client.shard.examples;
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t start = 0; start < examples.size();
         start += static_cast<std::size_t>(batch_size)) {
      std::size_t len = std::min(static_cast<std::size_t>(batch_size), examples.size() - start);
      std::span<const LabeledExample> batch(examples.data() + start, len);
      Gradient grad = backward(params, arch, batch);
      params = mask != nullptr ? masked_sgd_step(params, grad, alpha, *mask)
                               : sgd_step(params, grad, alpha);
    }
  }
  return params;
}

std::vector<int> select_clients(const std::vector<int>& participants, int k, Rng& rng) {
  if (k < 1) throw ConfigError("k must be >= 1, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > participants.size()) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds participant count " +
                      std::to_string(participants.size()));
  }
  std::vector<int> pool = participants;
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    std::size_t j = static_cast<std::size_t>(i) +
                    static_cast<std::size_t>(rng.next_below(pool.size() - static_cast<std::size_t>(i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    chosen.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return chosen;
}

ModelParams aggregate(const std::vector<std::pair<ModelParams, std::size_t>>& updates,
                      bool weighted) {
  if (updates.empty()) throw ProtocolError("aggregate: no updates");
  const ModelParams& first = updates.front().first;
  for (const auto& [params, m] : updates) {
    if (params.layers.size() != first.layers.size()) {
      throw ProtocolError("aggregate: updates have different layer counts");
    }
    for (std::size_t i = 0; i < params.tensor_count(); ++i) {
      if (params.tensor_at(i).shape != first.tensor_at(i).shape) {
        throw ProtocolError("aggregate: shape mismatch at tensor '" + params.tensor_name(i) + "'");
      }
    }
  }

  ModelParams acc = zeros_like(first);
  if (weighted) {
    std::size_t total = 0;
    for (const auto& [params, m] : updates) total += m;
    if (total == 0) throw ProtocolError("aggregate: weighted mode with zero total shard size");
    for (const auto& [params, m] : updates) {
      double w = static_cast<double>(m) / static_cast<double>(total);
      for (std::size_t t = 0; t < acc.tensor_count(); ++t) {
        Tensor& dst = acc.tensor_at(t);
        const Tensor& src = params.tensor_at(t);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
      }
    }
  } else {
    for (const auto& [params, m] : updates) {
      for (std::size_t t = 0; t < acc.tensor_count(); ++t) {
        Tensor& dst = acc.tensor_at(t);
        const Tensor& src = params.tensor_at(t);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    double inv = 1.0 / static_cast<double>(updates.size());
    for (std::size_t t = 0; t < acc.tensor_count(); ++t) {
      for (double& v : acc.tensor_at(t).values) v *= inv;
    }
  }
  return acc;
}

RoundRecord server_round(ServerState& state, const Architecture& arch,
                         std::vector<ClientState>& clients,
                         const std::vector<int>& participant_ids,
                         const LabeledDataset& test_set, const Hyperparams& hp,
                         bool record_timing) {
  if (participant_ids.empty()) throw ProtocolError("server_round: no participants");
  const auto t0 = std::chrono::steady_clock::now();
  const PruneMask* mask = state.mask ? &*state.mask : nullptr;

  // every participant trains on the broadcast weights
  for (int id : participant_ids) {
    ClientState* client = find_client(clients, id);
    client->local_params = local_round(*client, state.global_params, mask, arch, hp.alpha,
                                       hp.epochs, hp.batch_size);
  }

  std::vector<int> chosen = hp.aggregate_all
                                ? participant_ids
                                : select_clients(participant_ids, state.k, state.rng);
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::pair<ModelParams, std::size_t>> updates;
  updates.reserve(chosen.size());
  for (int id : chosen) {
    ClientState* client = find_client(clients, id);
    updates.emplace_back(client->local_params, client->shard.size());
  }

  ModelParams next = aggregate(updates, hp.weighted_aggregation);
  if (mask != nullptr) next = apply_mask(next, *mask);
  state.global_params = std::move(next);
  state.round += 1;

  RoundRecord rec;
  rec.round = state.round;
  rec.phase = state.phase;
  rec.participants = static_cast<int>(participant_ids.size());
  rec.accuracy = evaluate(state.global_params, arch, test_set.examples);
  rec.total = state.global_params.total_count();
  rec.nonzero = state.global_params.nonzero_count();
  rec.sparsity = 1.0 - static_cast<double>(rec.nonzero) / static_cast<double>(rec.total);
  rec.speedup = speedup(rec.total, rec.nonzero);
  rec.compressed_bytes = compressed_size(serialize_model(state.global_params, state.mask ? &*state.mask : nullptr));
  if (record_timing) {
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return rec;
}

void phase_transition(ServerState& state, int next_phase, double target_sparsity,
                      PruneGranularity granularity) {
  if (next_phase != state.phase + 1) {
    throw ProtocolError("phase transition must advance " + std::to_string(state.phase) +
                        " -> " + std::to_string(state.phase + 1) + ", got " +
                        std::to_string(next_phase));
  }
  if (state.flag != state.phase) {
    throw ProtocolError("sparsification already applied for this phase (flag = " +
                        std::to_string(state.flag) + ")");
  }

  PruneRate rate = rate_for_target(model_sparsity(state.global_params), target_sparsity);
  PruneMask mask = build_mask(state.global_params, rate, granularity);
  if (state.mask) mask = intersect_masks(mask, *state.mask);

  state.global_params = lth_reset(state.initial_params, mask);
  state.mask = std::move(mask);
  state.flag += 1;
  state.phase = next_phase;
}

RunResult run_experiment(const ExperimentConfig& config) {
  validate_config(config);

  const Architecture arch =
      Architecture::by_name(config.architecture, config.input_dim, config.classes);

  // datasets
  LabeledDataset train;
  LabeledDataset test;
  if (config.dataset == DatasetKind::Synthetic) {
    // one draw shared by train and test so both see the same class means
    LabeledDataset full = synthetic(config.classes, config.per_class + config.test_per_class,
                                    config.input_dim, stream_seed(config.seed, kStreamData));
    train.class_count = test.class_count = full.class_count;
    for (int c = 0; c < config.classes; ++c) {
      std::size_t base = static_cast<std::size_t>(c) *
                         static_cast<std::size_t>(config.per_class + config.test_per_class);
      for (int i = 0; i < config.per_class; ++i) {
        train.examples.push_back(std::move(full.examples[base + static_cast<std::size_t>(i)]));
      }
      for (int i = 0; i < config.test_per_class; ++i) {
        test.examples.push_back(std::move(
            full.examples[base + static_cast<std::size_t>(config.per_class + i)]));
      }
    }
  } else {
    train = load_idx(config.train_images, config.train_labels);
    test = load_idx(config.test_images, config.test_labels);
  }

  // client profiles, generated when the config does not pin them
  std::vector<ClientProfile> profiles = config.profiles;
  if (profiles.empty()) {
    Rng rng(stream_seed(config.seed, kStreamProfiles));
    profiles.reserve(static_cast<std::size_t>(config.clients));
    for (int id = 0; id < config.clients; ++id) {
      profiles.push_back({id, rng.next_double(), rng.next_double(), rng.next_double()});
    }
  }
  PoolAssignment pools = assign_pools(profiles, config.fractions);

  std::vector<int> all_ids;
  all_ids.reserve(profiles.size());
  for (const ClientProfile& p : profiles) all_ids.push_back(p.client_id);
  std::sort(all_ids.begin(), all_ids.end());

  std::map<int, DatasetShard> shards = partition(train, all_ids, config.samples_per_client,
                                                 stream_seed(config.seed, kStreamPartition));

  std::vector<ClientState> clients;
  clients.reserve(all_ids.size());
  for (int id : all_ids) {
    clients.push_back({id, ModelParams{}, std::move(shards.at(id))});
  }

  ServerState state = init_server(arch, stream_seed(config.seed, kStreamInit), config.k,
                                  stream_seed(config.seed, kStreamSelect));

  Hyperparams hp{config.alpha, config.epochs, config.batch_size, config.weighted_aggregation,
                 config.aggregate_all};

  RunResult result;
  std::size_t dense_bytes = 0;
  for (std::size_t phase_idx = 0; phase_idx < config.phases.size(); ++phase_idx) {
    int phase = static_cast<int>(phase_idx) + 1;
    if (phase >= 2) {
      phase_transition(state, phase, config.phases[phase_idx].target_sparsity,
                       config.granularity);
    }
    std::vector<int> ids = participants(pools, phase);

    PhaseSummary summary;
    summary.phase = phase;
    summary.participants = static_cast<int>(ids.size());
    summary.rounds = config.phases[phase_idx].rounds;
    for (int r = 0; r < config.phases[phase_idx].rounds; ++r) {
      RoundRecord rec =
          server_round(state, arch, clients, ids, test, hp, config.record_timing);
      summary.final_accuracy = rec.accuracy;
      summary.best_accuracy = std::max(summary.best_accuracy, rec.accuracy);
      summary.sparsity = rec.sparsity;
      summary.speedup = rec.speedup;
      result.records.push_back(rec);
    }
    result.phases.push_back(summary);
    if (phase == 1) dense_bytes = result.records.back().compressed_bytes;
  }

  result.size_report = make_size_report(dense_bytes, result.records.back().compressed_bytes);
  result.final_flag = state.flag;
  result.mask_present = state.mask.has_value();
  return result;
}

}  // namespace phasedfl
