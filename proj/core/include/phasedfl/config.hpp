#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phasedfl/heterogeneity.hpp"
#include "phasedfl/metrics.hpp"
#include "phasedfl/sparsify.hpp"

namespace phasedfl {

enum class DatasetKind { Synthetic, Idx };

struct PhaseSpec {
  int rounds = 0;
  double target_sparsity = 0.0;
};

/// Full experiment description. Parsed from a flat key = value document with
/// [phase N] sections; every field has a default except the dataset choice.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string architecture = "mlp-small";

  DatasetKind dataset = DatasetKind::Synthetic;
  // synthetic
  int classes = 10;
  int per_class = 5500;
  int test_per_class = 1000;
  int input_dim = 784;
  // idx
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;

  int clients = 100;
  int samples_per_client = 500;
  std::vector<double> fractions = {0.3, 0.3, 0.4};
  std::vector<PhaseSpec> phases = {{50, 0.0}, {70, 0.30}, {80, 0.80}};

  int k = 2;
  double alpha = 0.01;
  int epochs = 1;
  int batch_size = 32;
  bool weighted_aggregation = false;
  bool aggregate_all = false;
  PruneGranularity granularity = PruneGranularity::PerTensor;
  bool record_timing = false;

  std::filesystem::path out_dir = "out";
  EmitFormat format = EmitFormat::Csv;

  /// Optional explicit profiles; generated from the seed when empty.
  std::vector<ClientProfile> profiles;
};

/// Parses a config document, applies defaults and validates every invariant.
/// Throws ValidationError naming the offending key.
ExperimentConfig parse_config(const std::string& document);

ExperimentConfig load_config_file(const std::filesystem::path& path);

/// Re-checks cross-field invariants (after CLI overrides).
void validate_config(const ExperimentConfig& config);

}  // namespace phasedfl
