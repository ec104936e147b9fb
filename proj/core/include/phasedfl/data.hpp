#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "phasedfl/nn.hpp"

namespace phasedfl {

struct LabeledDataset {
  std::vector<LabeledExample> examples;
  int class_count = 0;
};

/// One client's private slice of a dataset.
struct DatasetShard {
  int client_id = -1;
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
};

/// Reads an IDX image/label file pair (the MNIST container format).
/// Pixels are scaled to [0, 1]; images come out shaped rows x cols x 1.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

/// Writes a dataset of rows x cols x 1 images with values k/255 back to the
/// IDX pair; load_idx(save_idx(d)) reproduces d exactly.
void save_idx(const LabeledDataset& dataset, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

/// Gaussian class clusters: each class mean is a seeded random unit-norm
/// direction scaled by 3.0, unit variance around it. Deterministic per seed.
LabeledDataset synthetic(int classes, int per_class, int input_dim, std::uint64_t seed);

/// Seeded shuffle, then contiguous disjoint slices of samples_per_client,
/// assigned in ascending client-id order.
std::map<int, DatasetShard> partition(const LabeledDataset& dataset,
                                      const std::vector<int>& client_ids,
                                      int samples_per_client, std::uint64_t seed);

}  // namespace phasedfl
