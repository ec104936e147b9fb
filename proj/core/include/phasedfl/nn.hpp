#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "phasedfl/mask.hpp"
#include "phasedfl/tensor.hpp"

namespace phasedfl {

// ---------------------------------------------------------------------------
// architecture
// ---------------------------------------------------------------------------

struct DenseSpec {
  int in = 0;
  int out = 0;
};
struct Conv2dSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;  // square, valid padding, stride 1
};
struct MaxPoolSpec {
  int kernel = 0;  // stride == kernel
};
struct ReluSpec {};
struct FlattenSpec {};
struct SoftmaxXentHeadSpec {
  int classes = 0;
};

using LayerSpec = std::variant<DenseSpec, Conv2dSpec, MaxPoolSpec, ReluSpec,
                               FlattenSpec, SoftmaxXentHeadSpec>;

struct Layer {
  std::string name;
  LayerSpec spec;
};

struct Architecture {
  std::vector<int> input_shape;  // {H, W, C} for image nets, {D} for vector nets
  std::vector<Layer> layers;

  /// dense(input_dim -> 32), relu, dense(32 -> classes)
  static Architecture mlp_small(int input_dim, int classes);
  /// conv2d(1 -> 4, 3x3), relu, maxpool(2), conv2d(4 -> 8, 3x3), relu,
  /// maxpool(2), flatten, dense(200 -> 10); expects 28x28x1 inputs
  static Architecture mnist_tiny();
  /// Resolves a config-selectable name ("mlp-small", "mnist-tiny").
  static Architecture by_name(const std::string& name, int input_dim, int classes);
};

/// Number of classes produced by the final layer.
int output_classes(const Architecture& arch);

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

struct LayerParams {
  std::string name;
  Tensor weights;
  Tensor bias;
};

/// Ordered, named weight/bias tensors of one model.
struct ModelParams {
  std::vector<LayerParams> layers;

  /// Parameter tensors in fixed order: layer 0 weights, layer 0 bias, ...
  std::size_t tensor_count() const { return layers.size() * 2; }
  Tensor& tensor_at(std::size_t i);
  const Tensor& tensor_at(std::size_t i) const;
  std::string tensor_name(std::size_t i) const;

  std::size_t total_count() const;
  std::size_t nonzero_count() const;
};

/// Same structure as the parameters it differentiates.
using Gradient = ModelParams;

/// Glorot-uniform weights, zero biases, deterministic in the seed.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

ModelParams zeros_like(const ModelParams& params);

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

struct LabeledExample {
  Tensor features;
  int label = 0;
};

struct ForwardResult {
  Tensor logits;  // shape {batch, classes}
  double loss = 0.0;  // mean cross-entropy over the batch, >= 0
};

ForwardResult forward(const ModelParams& params, const Architecture& arch,
                      std::span<const LabeledExample> batch);

/// d(mean loss)/d(parameter) for every parameter entry.
Gradient backward(const ModelParams& params, const Architecture& arch,
                  std::span<const LabeledExample> batch);

/// w' = w - alpha * g
ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double alpha);

/// w' = w - alpha * (g .* m); coordinates with m == 0 are left untouched.
ModelParams masked_sgd_step(const ModelParams& params, const Gradient& grad,
                            double alpha, const PruneMask& mask);

/// Fraction of examples whose argmax logit equals the label.
double evaluate(const ModelParams& params, const Architecture& arch,
                std::span<const LabeledExample> test_set);

}  // namespace phasedfl
