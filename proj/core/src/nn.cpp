#include "phasedfl/nn.hpp"

#include <algorithm>
#include <cmath>

#include "phasedfl/errors.hpp"
#include "phasedfl/rng.hpp"

namespace phasedfl {

// ---------------------------------------------------------------------------
// architecture
// ---------------------------------------------------------------------------

Architecture Architecture::mlp_small(int input_dim, int classes) {
  if (input_dim <= 0 || classes <= 0) {
    throw ValidationError("mlp-small needs positive input_dim and classes");
  }
  Architecture a;
  a.input_shape = {input_dim};
  a.layers = {
      {"dense1", DenseSpec{input_dim, 32}},
      {"relu1", ReluSpec{}},
      {"dense2", DenseSpec{32, classes}},
  };
  return a;
}

Architecture Architecture::mnist_tiny() {
  Architecture a;
  a.input_shape = {28, 28, 1};
  a.layers = {
      {"conv1", Conv2dSpec{1, 4, 3}},
      {"relu1", ReluSpec{}},
      {"pool1", MaxPoolSpec{2}},
      {"conv2", Conv2dSpec{4, 8, 3}},
      {"relu2", ReluSpec{}},
      {"pool2", MaxPoolSpec{2}},
      {"flatten", FlattenSpec{}},
      {"dense1", DenseSpec{200, 10}},
  };
  return a;
}

Architecture Architecture::by_name(const std::string& name, int input_dim, int classes) {
  if (name == "mlp-small") return mlp_small(input_dim, classes);
  if (name == "mnist-tiny") {
    if (input_dim != 28 * 28) {
      throw ConfigError("architecture 'mnist-tiny' expects 784 input values (28x28x1), got " +
                        std::to_string(input_dim));
    }
    if (classes != 10) {
      throw ConfigError("architecture 'mnist-tiny' expects 10 classes, got " +
                        std::to_string(classes));
    }
    return mnist_tiny();
  }
  throw ConfigError("unknown architecture '" + name + "'");
}

int output_classes(const Architecture& arch) {
  for (auto it = arch.layers.rbegin(); it != arch.layers.rend(); ++it) {
    if (const auto* d = std::get_if<DenseSpec>(&it->spec)) return d->out;
    if (const auto* h = std::get_if<SoftmaxXentHeadSpec>(&it->spec)) return h->classes;
  }
  throw ConfigError("architecture has no output layer");
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

Tensor& ModelParams::tensor_at(std::size_t i) {
  LayerParams& l = layers.at(i / 2);
  return (i % 2 == 0) ? l.weights : l.bias;
}

const Tensor& ModelParams::tensor_at(std::size_t i) const {
  const LayerParams& l = layers.at(i / 2);
  return (i % 2 == 0) ? l.weights : l.bias;
}

std::string ModelParams::tensor_name(std::size_t i) const {
  return layers.at(i / 2).name + (i % 2 == 0 ? ".weights" : ".bias");
}

std::size_t ModelParams::total_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::size_t ModelParams::nonzero_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += phasedfl::nonzero_count(l.weights) + phasedfl::nonzero_count(l.bias);
  return n;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams params;
  for (const Layer& layer : arch.layers) {
    if (const auto* d = std::get_if<DenseSpec>(&layer.spec)) {
      double bound = std::sqrt(6.0 / (d->in + d->out));
      Tensor w = Tensor::zeros({d->out, d->in});
      for (double& v : w.values) v = rng.uniform(-bound, bound);
      params.layers.push_back({layer.name, std::move(w), Tensor::zeros({d->out})});
    } else if (const auto* c = std::get_if<Conv2dSpec>(&layer.spec)) {
      int fan_in = c->in_channels * c->kernel * c->kernel;
      int fan_out = c->out_channels * c->kernel * c->kernel;
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      Tensor w = Tensor::zeros({c->out_channels, c->in_channels, c->kernel, c->kernel});
      for (double& v : w.values) v = rng.uniform(-bound, bound);
      params.layers.push_back({layer.name, std::move(w), Tensor::zeros({c->out_channels})});
    }
  }
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  z.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    z.layers.push_back({l.name, Tensor::zeros(l.weights.shape), Tensor::zeros(l.bias.shape)});
  }
  return z;
}

// ---------------------------------------------------------------------------
// shape checking
// ---------------------------------------------------------------------------

namespace {

struct CheckedModel {
  // index into params.layers for each arch layer, -1 for parameterless ones
  std::vector<int> param_of_layer;
  // shape flowing out of each arch layer
  std::vector<std::vector<int>> out_shape;
  int classes = 0;
};

[[noreturn]] void layer_error(const std::string& layer, const std::string& what) {
  throw ConfigError("layer '" + layer + "': " + what);
}

CheckedModel check_model(const ModelParams& params, const Architecture& arch,
                         const std::vector<int>& input_shape) {
  if (shape_numel(input_shape) != shape_numel(arch.input_shape)) {
    throw ConfigError("input shape " + shape_str(input_shape) +
                      " does not match architecture input " + shape_str(arch.input_shape));
  }

  CheckedModel checked;
  std::vector<int> cur = arch.input_shape;
  std::size_t pi = 0;

  for (const Layer& layer : arch.layers) {
    int param_idx = -1;
    if (const auto* d = std::get_if<DenseSpec>(&layer.spec)) {
      if (static_cast<std::size_t>(d->in) != shape_numel(cur)) {
        layer_error(layer.name, "dense expects " + std::to_string(d->in) +
                                    " input values, got " + shape_str(cur));
      }
      if (pi >= params.layers.size()) layer_error(layer.name, "missing parameters");
      const LayerParams& lp = params.layers[pi];
      if (lp.name != layer.name) {
        layer_error(layer.name, "parameter entry is named '" + lp.name + "'");
      }
      if (lp.weights.shape != std::vector<int>{d->out, d->in} ||
          lp.bias.shape != std::vector<int>{d->out}) {
        layer_error(layer.name, "weight shape " + shape_str(lp.weights.shape) +
                                    " does not match dense(" + std::to_string(d->in) + "," +
                                    std::to_string(d->out) + ")");
      }
      param_idx = static_cast<int>(pi++);
      cur = {d->out};
    } else if (const auto* c = std::get_if<Conv2dSpec>(&layer.spec)) {
      if (cur.size() != 3) {
        layer_error(layer.name, "conv2d expects HxWxC input, got " + shape_str(cur));
      }
      int h = cur[0], w = cur[1], ch = cur[2];
      if (ch != c->in_channels) {
        layer_error(layer.name, "expected " + std::to_string(c->in_channels) +
                                    " input channels, got " + std::to_string(ch));
      }
      if (h < c->kernel || w < c->kernel) {
        layer_error(layer.name, "input " + shape_str(cur) + " smaller than kernel " +
                                    std::to_string(c->kernel));
      }
      if (pi >= params.layers.size()) layer_error(layer.name, "missing parameters");
      const LayerParams& lp = params.layers[pi];
      if (lp.name != layer.name) {
        layer_error(layer.name, "parameter entry is named '" + lp.name + "'");
      }
      std::vector<int> want{c->out_channels, c->in_channels, c->kernel, c->kernel};
      if (lp.weights.shape != want || lp.bias.shape != std::vector<int>{c->out_channels}) {
        layer_error(layer.name, "weight shape " + shape_str(lp.weights.shape) +
                                    " does not match conv2d " + shape_str(want));
      }
      param_idx = static_cast<int>(pi++);
      cur = {h - c->kernel + 1, w - c->kernel + 1, c->out_channels};
    } else if (const auto* m = std::get_if<MaxPoolSpec>(&layer.spec)) {
      if (cur.size() != 3) {
        layer_error(layer.name, "maxpool expects HxWxC input, got " + shape_str(cur));
      }
      int oh = cur[0] / m->kernel, ow = cur[1] / m->kernel;
      if (oh < 1 || ow < 1) {
        layer_error(layer.name, "input " + shape_str(cur) + " smaller than pool " +
                                    std::to_string(m->kernel));
      }
      cur = {oh, ow, cur[2]};
    } else if (std::holds_alternative<ReluSpec>(layer.spec)) {
      // shape preserved
    } else if (std::holds_alternative<FlattenSpec>(layer.spec)) {
      cur = {static_cast<int>(shape_numel(cur))};
    } else if (const auto* hd = std::get_if<SoftmaxXentHeadSpec>(&layer.spec)) {
      if (shape_numel(cur) != static_cast<std::size_t>(hd->classes)) {
        layer_error(layer.name, "head expects " + std::to_string(hd->classes) +
                                    " logits, got " + shape_str(cur));
      }
      cur = {hd->classes};
    }
    checked.param_of_layer.push_back(param_idx);
    checked.out_shape.push_back(cur);
  }

  if (pi != params.layers.size()) {
    throw ConfigError("model has " + std::to_string(params.layers.size()) +
                      " parameter entries, architecture uses " + std::to_string(pi));
  }
  if (cur.size() != 1) {
    throw ConfigError("architecture output must be a class vector, got " + shape_str(cur));
  }
  checked.classes = cur[0];
  return checked;
}

// ---------------------------------------------------------------------------
// single-example pass
// ---------------------------------------------------------------------------

struct Trace {
  // acts[0] is the input, acts[i + 1] the output of arch layer i
  std::vector<std::vector<double>> acts;
  // flat argmax input index per output element, for maxpool layers only
  std::vector<std::vector<int>> pool_argmax;
};

std::vector<double> forward_one(const ModelParams& params, const Architecture& arch,
                                const CheckedModel& checked,
                                const std::vector<double>& input, Trace* trace) {
  std::vector<double> cur = input;
  std::vector<int> cur_shape = arch.input_shape;
  if (trace) {
    trace->acts.clear();
    trace->pool_argmax.assign(arch.layers.size(), {});
    trace->acts.push_back(cur);
  }

  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const Layer& layer = arch.layers[li];
    if (const auto* d = std::get_if<DenseSpec>(&layer.spec)) {
      const LayerParams& lp = params.layers[checked.param_of_layer[li]];
      std::vector<double> out(static_cast<std::size_t>(d->out));
      for (int o = 0; o < d->out; ++o) {
        double acc = lp.bias[static_cast<std::size_t>(o)];
        const double* wrow = lp.weights.values.data() + static_cast<std::size_t>(o) * d->in;
        for (int i = 0; i < d->in; ++i) acc += wrow[i] * cur[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = acc;
      }
      cur = std::move(out);
      cur_shape = {d->out};
    } else if (const auto* c = std::get_if<Conv2dSpec>(&layer.spec)) {
      const LayerParams& lp = params.layers[checked.param_of_layer[li]];
      int h = cur_shape[0], w = cur_shape[1];
      int k = c->kernel, ic_n = c->in_channels, oc_n = c->out_channels;
      int oh_n = h - k + 1, ow_n = w - k + 1;
      std::vector<double> out(static_cast<std::size_t>(oh_n * ow_n * oc_n));
      for (int oh = 0; oh < oh_n; ++oh) {
        for (int ow = 0; ow < ow_n; ++ow) {
          for (int oc = 0; oc < oc_n; ++oc) {
            double acc = lp.bias[static_cast<std::size_t>(oc)];
            for (int ic = 0; ic < ic_n; ++ic) {
              for (int dh = 0; dh < k; ++dh) {
                const double* in_row = cur.data() + ((oh + dh) * w + ow) * ic_n + ic;
                const double* w_row =
                    lp.weights.values.data() + (((oc * ic_n + ic) * k + dh) * k);
                for (int dw = 0; dw < k; ++dw) acc += in_row[dw * ic_n] * w_row[dw];
              }
            }
            out[static_cast<std::size_t>((oh * ow_n + ow) * oc_n + oc)] = acc;
          }
        }
      }
      cur = std::move(out);
      cur_shape = {oh_n, ow_n, oc_n};
    } else if (const auto* m = std::get_if<MaxPoolSpec>(&layer.spec)) {
      int h = cur_shape[0], w = cur_shape[1], ch = cur_shape[2];
      int k = m->kernel, oh_n = h / k, ow_n = w / k;
      std::vector<double> out(static_cast<std::size_t>(oh_n * ow_n * ch));
      std::vector<int> argmax(out.size());
      for (int oh = 0; oh < oh_n; ++oh) {
        for (int ow = 0; ow < ow_n; ++ow) {
          for (int c2 = 0; c2 < ch; ++c2) {
            int best_idx = ((oh * k) * w + (ow * k)) * ch + c2;
            double best = cur[static_cast<std::size_t>(best_idx)];
            for (int dh = 0; dh < k; ++dh) {
              for (int dw = 0; dw < k; ++dw) {
                int idx = ((oh * k + dh) * w + (ow * k + dw)) * ch + c2;
                double v = cur[static_cast<std::size_t>(idx)];
                // strict > keeps the first maximum on ties
                if (v > best) {
                  best = v;
                  best_idx = idx;
                }
              }
            }
            std::size_t oi = static_cast<std::size_t>((oh * ow_n + ow) * ch + c2);
            out[oi] = best;
            argmax[oi] = best_idx;
          }
        }
      }
      cur = std::move(out);
      cur_shape = {oh_n, ow_n, ch};
      if (trace) trace->pool_argmax[li] = std::move(argmax);
    } else if (std::holds_alternative<ReluSpec>(layer.spec)) {
      std::vector<double> out(cur.size());
      for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] > 0.0 ? cur[i] : 0.0;
      cur = std::move(out);
    } else if (std::holds_alternative<FlattenSpec>(layer.spec)) {
      cur_shape = {static_cast<int>(cur.size())};
    } else {
      // softmax_xent_head: logits pass through, loss applied outside
      cur_shape = {static_cast<int>(cur.size())};
    }
    if (trace) trace->acts.push_back(cur);
  }
  return cur;
}

double xent_loss(const std::vector<double>& logits, int label) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return (m + std::log(s)) - logits[static_cast<std::size_t>(label)];
}

void validate_batch(std::span<const LabeledExample> batch, int classes,
                    const char* op_name) {
  if (batch.empty()) throw ValidationError(std::string(op_name) + ": empty batch");
  for (const LabeledExample& ex : batch) {
    if (ex.features.shape != batch[0].features.shape) {
      throw ValidationError(std::string(op_name) + ": examples have mixed shapes " +
                            shape_str(batch[0].features.shape) + " and " +
                            shape_str(ex.features.shape));
    }
    if (ex.label < 0 || ex.label >= classes) {
      throw ValidationError(std::string(op_name) + ": label " + std::to_string(ex.label) +
                            " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void check_grad_alignment(const ModelParams& params, const Gradient& grad) {
  if (params.layers.size() != grad.layers.size()) {
    throw ValidationError("gradient has " + std::to_string(grad.layers.size()) +
                          " entries, parameters have " + std::to_string(params.layers.size()));
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (!same_shape(params.layers[i].weights, grad.layers[i].weights) ||
        !same_shape(params.layers[i].bias, grad.layers[i].bias)) {
      throw ValidationError("gradient shape mismatch at layer '" + params.layers[i].name + "'");
    }
  }
}

void check_mask_alignment(const ModelParams& params, const PruneMask& mask) {
  if (mask.entries.size() != params.tensor_count()) {
    throw ProtocolError("mask has " + std::to_string(mask.entries.size()) +
                        " entries, model has " + std::to_string(params.tensor_count()) +
                        " parameter tensors");
  }
  for (std::size_t i = 0; i < mask.entries.size(); ++i) {
    if (mask.entries[i].shape != params.tensor_at(i).shape) {
      throw ProtocolError("mask shape " + shape_str(mask.entries[i].shape) +
                          " does not match tensor '" + params.tensor_name(i) + "' shape " +
                          shape_str(params.tensor_at(i).shape));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// public ops
// ---------------------------------------------------------------------------

ForwardResult forward(const ModelParams& params, const Architecture& arch,
                      std::span<const LabeledExample> batch) {
  if (batch.empty()) throw ValidationError("forward: empty batch");
  CheckedModel checked = check_model(params, arch, batch[0].features.shape);
  validate_batch(batch, checked.classes, "forward");

  Tensor logits = Tensor::zeros({static_cast<int>(batch.size()), checked.classes});
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<double> z = forward_one(params, arch, checked, batch[b].features.values, nullptr);
    loss_sum += xent_loss(z, batch[b].label);
    std::copy(z.begin(), z.end(),
              logits.values.begin() + b * static_cast<std::size_t>(checked.classes));
  }
  return {std::move(logits), loss_sum / static_cast<double>(batch.size())};
}

Gradient backward(const ModelParams& params, const Architecture& arch,
                  std::span<const LabeledExample> batch) {
  if (batch.empty()) throw ValidationError("backward: empty batch");
  CheckedModel checked = check_model(params, arch, batch[0].features.shape);
  validate_batch(batch, checked.classes, "backward");

  Gradient grad = zeros_like(params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Trace trace;

  for (const LabeledExample& ex : batch) {
    std::vector<double> z = forward_one(params, arch, checked, ex.features.values, &trace);

    // d(mean loss)/d(logits) = (softmax(z) - onehot(label)) / batch
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    std::vector<double> g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = std::exp(z[i] - m) / s * inv_b;
    g[static_cast<std::size_t>(ex.label)] -= inv_b;

    for (std::size_t li = arch.layers.size(); li-- > 0;) {
      const Layer& layer = arch.layers[li];
      const std::vector<double>& x = trace.acts[li];
      if (const auto* d = std::get_if<DenseSpec>(&layer.spec)) {
        LayerParams& gl = grad.layers[static_cast<std::size_t>(checked.param_of_layer[li])];
        const LayerParams& lp = params.layers[static_cast<std::size_t>(checked.param_of_layer[li])];
        std::vector<double> gx(static_cast<std::size_t>(d->in), 0.0);
        for (int o = 0; o < d->out; ++o) {
          double go = g[static_cast<std::size_t>(o)];
          gl.bias[static_cast<std::size_t>(o)] += go;
          double* gw_row = gl.weights.values.data() + static_cast<std::size_t>(o) * d->in;
          const double* w_row = lp.weights.values.data() + static_cast<std::size_t>(o) * d->in;
          for (int i = 0; i < d->in; ++i) {
            gw_row[i] += go * x[static_cast<std::size_t>(i)];
            gx[static_cast<std::size_t>(i)] += go * w_row[i];
          }
        }
        g = std::move(gx);
      } else if (const auto* c = std::get_if<Conv2dSpec>(&layer.spec)) {
        LayerParams& gl = grad.layers[static_cast<std::size_t>(checked.param_of_layer[li])];
        const LayerParams& lp = params.layers[static_cast<std::size_t>(checked.param_of_layer[li])];
        // input shape for this layer
        int h = 0, w = 0;
        if (li == 0) {
          h = arch.input_shape[0];
          w = arch.input_shape[1];
        } else {
          // previous layer's out_shape is rank 3 here by construction
          h = checked.out_shape[li - 1][0];
          w = checked.out_shape[li - 1][1];
        }
        int k = c->kernel, ic_n = c->in_channels, oc_n = c->out_channels;
        int oh_n = h - k + 1, ow_n = w - k + 1;
        std::vector<double> gx(x.size(), 0.0);
        for (int oh = 0; oh < oh_n; ++oh) {
          for (int ow = 0; ow < ow_n; ++ow) {
            for (int oc = 0; oc < oc_n; ++oc) {
              double go = g[static_cast<std::size_t>((oh * ow_n + ow) * oc_n + oc)];
              gl.bias[static_cast<std::size_t>(oc)] += go;
              for (int ic = 0; ic < ic_n; ++ic) {
                for (int dh = 0; dh < k; ++dh) {
                  for (int dw = 0; dw < k; ++dw) {
                    std::size_t xi =
                        static_cast<std::size_t>(((oh + dh) * w + (ow + dw)) * ic_n + ic);
                    std::size_t wi =
                        static_cast<std::size_t>((((oc * ic_n + ic) * k + dh) * k + dw));
                    gl.weights[wi] += go * x[xi];
                    gx[xi] += go * lp.weights[wi];
                  }
                }
              }
            }
          }
        }
        g = std::move(gx);
      } else if (std::holds_alternative<MaxPoolSpec>(layer.spec)) {
        std::vector<double> gx(x.size(), 0.0);
        const std::vector<int>& argmax = trace.pool_argmax[li];
        for (std::size_t i = 0; i < g.size(); ++i) {
          gx[static_cast<std::size_t>(argmax[i])] += g[i];
        }
        g = std::move(gx);
      } else if (std::holds_alternative<ReluSpec>(layer.spec)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] <= 0.0) g[i] = 0.0;
        }
      }
      // flatten and head: gradient passes through unchanged
    }
  }
  return grad;
}

ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ValidationError("learning rate must be finite and >= 0, got " + std::to_string(alpha));
  }
  check_grad_alignment(params, grad);
  ModelParams out = params;
  for (std::size_t i = 0; i < out.tensor_count(); ++i) {
    Tensor& t = out.tensor_at(i);
    const Tensor& g = grad.tensor_at(i);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] -= alpha * g[j];
  }
  return out;
}

ModelParams masked_sgd_step(const ModelParams& params, const Gradient& grad, double alpha,
                            const PruneMask& mask) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ValidationError("learning rate must be finite and >= 0, got " + std::to_string(alpha));
  }
  check_grad_alignment(params, grad);
  check_mask_alignment(params, mask);
  ModelParams out = params;
  for (std::size_t i = 0; i < out.tensor_count(); ++i) {
    Tensor& t = out.tensor_at(i);
    const Tensor& g = grad.tensor_at(i);
    const BinaryTensor& m = mask.entries[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (m.bits[j]) t[j] -= alpha * g[j];
    }
  }
  return out;
}

double evaluate(const ModelParams& params, const Architecture& arch,
                std::span<const LabeledExample> test_set) {
  if (test_set.empty()) throw ValidationError("evaluate: empty test set");
  CheckedModel checked = check_model(params, arch, test_set[0].features.shape);
  validate_batch(test_set, checked.classes, "evaluate");

  std::size_t correct = 0;
  for (const LabeledExample& ex : test_set) {
    std::vector<double> z = forward_one(params, arch, checked, ex.features.values, nullptr);
    std::size_t best = 0;
    for (std::size_t i = 1; i < z.size(); ++i) {
      if (z[i] > z[best]) best = i;
    }
    correct += (static_cast<int>(best) == ex.label);
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

}  // namespace phasedfl
