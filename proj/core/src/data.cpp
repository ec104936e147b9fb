#include "phasedfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "phasedfl/errors.hpp"
#include "phasedfl/rng.hpp"

namespace phasedfl {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;  // idx3, unsigned bytes
constexpr std::uint32_t kLabelsMagic = 0x00000801;  // idx1, unsigned bytes

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

std::uint32_t read_u32be(const std::vector<std::uint8_t>& buf, std::size_t offset,
                         const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    throw IngestError("'" + path.string() + "': truncated header at byte offset " +
                      std::to_string(offset));
  }
  return (static_cast<std::uint32_t>(buf[offset]) << 24) |
         (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
         static_cast<std::uint32_t>(buf[offset + 3]);
}

void write_u32be(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
               static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const std::vector<std::uint8_t> img = read_file(images_path);
  const std::vector<std::uint8_t> lbl = read_file(labels_path);

  std::uint32_t img_magic = read_u32be(img, 0, images_path);
  if (img_magic != kImagesMagic) {
    throw IngestError("'" + images_path.string() + "': bad magic 0x" +
                      [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", img_magic); return std::string(b); }() +
                      " at byte offset 0, expected 0x00000803");
  }
  std::uint32_t count = read_u32be(img, 4, images_path);
  std::uint32_t rows = read_u32be(img, 8, images_path);
  std::uint32_t cols = read_u32be(img, 12, images_path);
  std::size_t need = 16 + static_cast<std::size_t>(count) * rows * cols;
  if (img.size() < need) {
    throw IngestError("'" + images_path.string() + "': truncated payload, need " +
                      std::to_string(need) + " bytes from byte offset 16, have " +
                      std::to_string(img.size()));
  }

  std::uint32_t lbl_magic = read_u32be(lbl, 0, labels_path);
  if (lbl_magic != kLabelsMagic) {
    throw IngestError("'" + labels_path.string() + "': bad magic 0x" +
                      [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", lbl_magic); return std::string(b); }() +
                      " at byte offset 0, expected 0x00000801");
  }
  std::uint32_t lbl_count = read_u32be(lbl, 4, labels_path);
  if (lbl_count != count) {
    throw IngestError("image count " + std::to_string(count) + " ('" + images_path.string() +
                      "' byte offset 4) does not match label count " + std::to_string(lbl_count) +
                      " ('" + labels_path.string() + "' byte offset 4)");
  }
  if (lbl.size() < 8 + static_cast<std::size_t>(count)) {
    throw IngestError("'" + labels_path.string() + "': truncated payload, need " +
                      std::to_string(8 + count) + " bytes from byte offset 8, have " +
                      std::to_string(lbl.size()));
  }

  LabeledDataset dataset;
  dataset.examples.reserve(count);
  int max_label = 0;
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t = Tensor::zeros({static_cast<int>(rows), static_cast<int>(cols), 1});
    const std::uint8_t* src = img.data() + 16 + static_cast<std::size_t>(i) * pixels;
    for (std::size_t p = 0; p < pixels; ++p) t[p] = static_cast<double>(src[p]) / 255.0;
    int label = static_cast<int>(lbl[8 + i]);
    max_label = std::max(max_label, label);
    dataset.examples.push_back({std::move(t), label});
  }
  dataset.class_count = max_label + 1;
  return dataset;
}

void save_idx(const LabeledDataset& dataset, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  if (dataset.examples.empty()) throw ValidationError("save_idx: empty dataset");
  const std::vector<int>& shape = dataset.examples.front().features.shape;
  if (shape.size() != 3 || shape[2] != 1) {
    throw ValidationError("save_idx expects rows x cols x 1 images, got " + shape_str(shape));
  }

  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot write '" + images_path.string() + "'");
  write_u32be(img, kImagesMagic);
  write_u32be(img, static_cast<std::uint32_t>(dataset.examples.size()));
  write_u32be(img, static_cast<std::uint32_t>(shape[0]));
  write_u32be(img, static_cast<std::uint32_t>(shape[1]));

  std::ofstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw IoError("cannot write '" + labels_path.string() + "'");
  write_u32be(lbl, kLabelsMagic);
  write_u32be(lbl, static_cast<std::uint32_t>(dataset.examples.size()));

  for (const LabeledExample& ex : dataset.examples) {
    if (ex.features.shape != shape) {
      throw ValidationError("save_idx: examples have mixed shapes");
    }
    for (double v : ex.features.values) {
      long byte = std::lround(v * 255.0);
      img.put(static_cast<char>(std::clamp(byte, 0l, 255l)));
    }
    lbl.put(static_cast<char>(ex.label));
  }
  if (!img || !lbl) throw IoError("short write to IDX pair");
}

LabeledDataset synthetic(int classes, int per_class, int input_dim, std::uint64_t seed) {
  if (classes <= 0 || per_class <= 0 || input_dim <= 0) {
    throw ValidationError("synthetic: classes, per_class and input_dim must be positive");
  }
  Rng rng(seed);

  // class means first so they only depend on (classes, input_dim, seed)
  std::vector<std::vector<double>> means(static_cast<std::size_t>(classes));
  for (auto& mu : means) {
    mu.resize(static_cast<std::size_t>(input_dim));
    double norm_sq = 0.0;
    for (double& v : mu) {
      v = rng.next_normal();
      norm_sq += v * v;
    }
    double scale = 3.0 / std::sqrt(norm_sq);
    for (double& v : mu) v *= scale;
  }

  LabeledDataset dataset;
  dataset.class_count = classes;
  dataset.examples.reserve(static_cast<std::size_t>(classes) * per_class);
  for (int c = 0; c < classes; ++c) {
    const auto& mu = means[static_cast<std::size_t>(c)];
    for (int s = 0; s < per_class; ++s) {
      Tensor t = Tensor::zeros({input_dim});
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = mu[j] + rng.next_normal();
      dataset.examples.push_back({std::move(t), c});
    }
  }
  return dataset;
}

std::map<int, DatasetShard> partition(const LabeledDataset& dataset,
                                      const std::vector<int>& client_ids,
                                      int samples_per_client, std::uint64_t seed) {
  if (client_ids.empty()) throw ValidationError("partition: no client ids");
  if (samples_per_client <= 0) {
    throw ValidationError("partition: samples_per_client must be positive");
  }
  std::set<int> unique(client_ids.begin(), client_ids.end());
  if (unique.size() != client_ids.size()) {
    throw ValidationError("partition: duplicate client ids");
  }
  const std::size_t need = client_ids.size() * static_cast<std::size_t>(samples_per_client);
  if (need > dataset.examples.size()) {
    throw ConfigError("partition requires " + std::to_string(need) + " samples (" +
                      std::to_string(client_ids.size()) + " clients x " +
                      std::to_string(samples_per_client) + "), dataset has " +
                      std::to_string(dataset.examples.size()));
  }

  std::vector<std::size_t> perm(dataset.examples.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  std::map<int, DatasetShard> shards;
  std::size_t cursor = 0;
  for (int id : unique) {
    DatasetShard shard;
    shard.client_id = id;
    shard.examples.reserve(static_cast<std::size_t>(samples_per_client));
    for (int s = 0; s < samples_per_client; ++s) {
      shard.examples.push_back(dataset.examples[perm[cursor++]]);
    }
    shards.emplace(id, std::move(shard));
  }
  return shards;
}

}  // namespace phasedfl
