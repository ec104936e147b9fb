#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "phasedfl/data.hpp"
#include "phasedfl/errors.hpp"
#include "phasedfl/rng.hpp"

using namespace phasedfl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("phasedfl-data-" + std::to_string(::getpid()) + "-" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// 2x2 images so fixtures stay readable
LabeledDataset tiny_image_dataset() {
  LabeledDataset ds;
  ds.class_count = 2;
  ds.examples.push_back({Tensor({2, 2, 1}, {0.0, 1.0, 0.0, 1.0}), 0});
  ds.examples.push_back({Tensor({2, 2, 1}, {1.0, 0.0, 1.0, 0.0}), 1});
  return ds;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("hand-built IDX fixture maps 0/255 bytes to 0.0/1.0") {
  TempDir dir;
  fs::path images = dir.path / "img";
  fs::path labels = dir.path / "lbl";
  save_idx(tiny_image_dataset(), images, labels);

  LabeledDataset loaded = load_idx(images, labels);
  REQUIRE(loaded.examples.size() == 2);
  CHECK(loaded.examples[0].features.values == std::vector<double>{0.0, 1.0, 0.0, 1.0});
  CHECK(loaded.examples[1].features.values == std::vector<double>{1.0, 0.0, 1.0, 0.0});
  CHECK(loaded.examples[0].features.shape == std::vector<int>{2, 2, 1});
  CHECK(loaded.examples[0].label == 0);
  CHECK(loaded.examples[1].label == 1);
  CHECK(loaded.class_count == 2);
}

TEST_CASE("IDX round-trip reproduces byte-valued tensors exactly") {
  TempDir dir;
  Rng rng(51);
  LabeledDataset ds;
  ds.class_count = 4;
  for (int i = 0; i < 12; ++i) {
    Tensor img = Tensor::zeros({5, 7, 1});
    for (double& v : img.values) v = static_cast<double>(rng.next_below(256)) / 255.0;
    ds.examples.push_back({std::move(img), static_cast<int>(rng.next_below(4))});
  }
  // labels must cover class_count - 1 for the reload to agree
  ds.examples[0].label = 3;

  fs::path images = dir.path / "img";
  fs::path labels = dir.path / "lbl";
  save_idx(ds, images, labels);
  LabeledDataset loaded = load_idx(images, labels);

  REQUIRE(loaded.examples.size() == ds.examples.size());
  CHECK(loaded.class_count == 4);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(loaded.examples[i].features.values == ds.examples[i].features.values);
    CHECK(loaded.examples[i].label == ds.examples[i].label);
  }
}

TEST_CASE("load_idx rejects a bad magic number at offset 0") {
  TempDir dir;
  fs::path images = dir.path / "img";
  fs::path labels = dir.path / "lbl";
  save_idx(tiny_image_dataset(), images, labels);

  std::vector<std::uint8_t> bytes = slurp(images);
  bytes[3] = 0x07;
  spit(images, bytes);
  CHECK_THROWS_WITH_AS(load_idx(images, labels), doctest::Contains("byte offset 0"),
                       IngestError);
}

TEST_CASE("load_idx rejects a truncated image payload") {
  TempDir dir;
  fs::path images = dir.path / "img";
  fs::path labels = dir.path / "lbl";
  save_idx(tiny_image_dataset(), images, labels);

  std::vector<std::uint8_t> bytes = slurp(images);
  bytes.resize(bytes.size() - 3);
  spit(images, bytes);
  CHECK_THROWS_WITH_AS(load_idx(images, labels), doctest::Contains("truncated"),
                       IngestError);
}

TEST_CASE("load_idx rejects an image/label count mismatch") {
  TempDir dir;
  fs::path images = dir.path / "img";
  fs::path labels = dir.path / "lbl";
  fs::path labels3 = dir.path / "lbl3";
  save_idx(tiny_image_dataset(), images, labels);

  LabeledDataset three = tiny_image_dataset();
  three.examples.push_back({Tensor({2, 2, 1}, {0.5, 0.5, 0.5, 0.5}), 1});
  save_idx(three, dir.path / "img3", labels3);

  CHECK_THROWS_WITH_AS(load_idx(images, labels3), doctest::Contains("count"), IngestError);
}

TEST_CASE("load_idx reports missing files") {
  TempDir dir;
  CHECK_THROWS_AS(load_idx(dir.path / "nope-img", dir.path / "nope-lbl"), IngestError);
}

TEST_CASE("synthetic data is deterministic in the seed") {
  LabeledDataset a = synthetic(3, 5, 8, 99);
  LabeledDataset b = synthetic(3, 5, 8, 99);
  REQUIRE(a.examples.size() == 15);
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    CHECK(a.examples[i].features.values == b.examples[i].features.values);
    CHECK(a.examples[i].label == b.examples[i].label);
  }
  LabeledDataset c = synthetic(3, 5, 8, 100);
  CHECK(a.examples[0].features.values != c.examples[0].features.values);
}

TEST_CASE("synthetic sizes and labels count out") {
  LabeledDataset ds = synthetic(10, 1, 4, 7);
  CHECK(ds.examples.size() == 10);
  CHECK(ds.class_count == 10);
  for (int c = 0; c < 10; ++c) CHECK(ds.examples[static_cast<std::size_t>(c)].label == c);
  CHECK_THROWS_AS(synthetic(0, 1, 4, 7), ValidationError);
  CHECK_THROWS_AS(synthetic(2, 0, 4, 7), ValidationError);
}

TEST_CASE("well-separated synthetic classes train a linear model past 0.95") {
  LabeledDataset ds = synthetic(2, 120, 16, 5);
  Architecture arch;
  arch.input_shape = {16};
  arch.layers = {{"dense1", DenseSpec{16, 2}}};
  ModelParams p;
  p.layers.push_back({"dense1", Tensor::zeros({2, 16}), Tensor::zeros({2})});

  std::vector<LabeledExample> train, held_out;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 120; ++i)
      ((i < 100) ? train : held_out).push_back(ds.examples[static_cast<std::size_t>(c * 120 + i)]);

  for (int step = 0; step < 200; ++step) {
    Gradient g = backward(p, arch, train);
    p = sgd_step(p, g, 0.5);
  }
  CHECK(evaluate(p, arch, train) > 0.95);
  CHECK(evaluate(p, arch, held_out) > 0.95);
}

TEST_CASE("partition conserves and separates samples") {
  // features carry a unique id so shard disjointness is visible after copying
  LabeledDataset ds;
  ds.class_count = 4;
  for (int i = 0; i < 100; ++i) {
    ds.examples.push_back({Tensor({1}, {static_cast<double>(i)}), i % 4});
  }
  std::vector<int> ids{0, 1, 2, 3, 4};
  std::map<int, DatasetShard> shards = partition(ds, ids, 15, 7);

  REQUIRE(shards.size() == 5);
  std::set<double> seen;
  std::size_t total = 0;
  for (const auto& [id, shard] : shards) {
    CHECK(shard.client_id == id);
    CHECK(shard.size() == 15);
    total += shard.size();
    for (const LabeledExample& ex : shard.examples) {
      CHECK(seen.insert(ex.features[0]).second);  // no example lands twice
    }
  }
  CHECK(total == 75);
}

TEST_CASE("100 clients of 500 samples fit a 60k dataset disjointly") {
  LabeledDataset ds;
  ds.class_count = 10;
  ds.examples.reserve(60000);
  for (int i = 0; i < 60000; ++i) {
    ds.examples.push_back({Tensor({1}, {static_cast<double>(i)}), i % 10});
  }
  std::vector<int> ids(100);
  std::iota(ids.begin(), ids.end(), 0);
  std::map<int, DatasetShard> shards = partition(ds, ids, 500, 77);

  std::set<double> seen;
  std::size_t total = 0;
  for (const auto& [id, shard] : shards) {
    CHECK(shard.size() == 500);
    total += shard.size();
    for (const LabeledExample& ex : shard.examples) CHECK(seen.insert(ex.features[0]).second);
  }
  CHECK(total == 50000);
}

TEST_CASE("one client can take the whole dataset") {
  LabeledDataset ds;
  ds.class_count = 2;
  for (int i = 0; i < 10; ++i)
    ds.examples.push_back({Tensor({1}, {static_cast<double>(i)}), i % 2});
  std::map<int, DatasetShard> shards = partition(ds, {3}, 10, 11);
  REQUIRE(shards.size() == 1);
  std::set<double> got;
  for (const LabeledExample& ex : shards.at(3).examples) got.insert(ex.features[0]);
  CHECK(got.size() == 10);
}

TEST_CASE("different seeds assign differently but conserve sizes") {
  LabeledDataset ds;
  ds.class_count = 2;
  for (int i = 0; i < 60; ++i)
    ds.examples.push_back({Tensor({1}, {static_cast<double>(i)}), i % 2});
  std::vector<int> ids{0, 1, 2};
  std::map<int, DatasetShard> a = partition(ds, ids, 20, 1);
  std::map<int, DatasetShard> b = partition(ds, ids, 20, 2);
  bool any_difference = false;
  for (int id : ids) {
    CHECK(a.at(id).size() == b.at(id).size());
    for (std::size_t i = 0; i < a.at(id).size(); ++i) {
      any_difference |= (a.at(id).examples[i].features[0] != b.at(id).examples[i].features[0]);
    }
  }
  CHECK(any_difference);
}

TEST_CASE("partition refuses when data runs short") {
  LabeledDataset ds;
  ds.class_count = 2;
  for (int i = 0; i < 10; ++i)
    ds.examples.push_back({Tensor({1}, {static_cast<double>(i)}), i % 2});
  CHECK_THROWS_WITH_AS(partition(ds, {0, 1, 2}, 4, 3), doctest::Contains("12"), ConfigError);
  CHECK_THROWS_AS(partition(ds, {0, 0}, 2, 3), ValidationError);
  CHECK_THROWS_AS(partition(ds, {}, 2, 3), ValidationError);
}
