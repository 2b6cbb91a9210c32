#include "sharplab/models.hpp"

#include <cmath>
#include <random>
#include <string>

#include "sharplab/error.hpp"

namespace sharplab {

void ModelSpec::validate() const {
  if (num_classes < 2) fail(ErrorKind::kInvalidArgument, "model needs at least 2 classes");
  if (input_dim < 1) fail(ErrorKind::kInvalidArgument, "model input_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) fail(ErrorKind::kInvalidArgument, "hidden layer width must be >= 1");
  }
  if (classifier == ClassifierKind::kCosine && !(cosine_scale > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "cosine_scale must be positive");
  }
}

ParameterSet init_params(const ModelSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.init_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.raw()) v = stddev * normal(rng);
    return t;
  };

  ParameterSet params;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
    const std::size_t width = spec.hidden_dims[i];
    params.add("fc" + std::to_string(i) + ".weight",
               gaussian({fan_in, width}, std::sqrt(2.0 / static_cast<double>(fan_in))));
    params.add("fc" + std::to_string(i) + ".bias", Tensor::zeros({width}));
    fan_in = width;
  }
  const double head_std = std::sqrt(1.0 / static_cast<double>(fan_in));
  if (spec.classifier == ClassifierKind::kPlain) {
    params.add("head.weight", gaussian({fan_in, spec.num_classes}, head_std));
    params.add("head.bias", Tensor::zeros({spec.num_classes}));
  } else {
    params.add("head.weight", gaussian({spec.num_classes, fan_in}, head_std));
  }
  return params;
}

Var forward(Tape& tape, std::span<const Var> params, const ModelSpec& spec, Var inputs) {
  const std::size_t expected = 2 * spec.hidden_dims.size() + (spec.classifier == ClassifierKind::kPlain ? 2 : 1);
  if (params.size() != expected) {
    fail(ErrorKind::kShape, "forward: expected " + std::to_string(expected) + " parameter tensors, got " +
                                std::to_string(params.size()));
  }
  if (!tape.owns(inputs)) fail(ErrorKind::kInvalidArgument, "forward: inputs were recorded on another tape");
  const Tensor& x = inputs.value();
  if (x.rank() != 2 || x.cols() != spec.input_dim) {
    fail(ErrorKind::kShape, "forward: input shape " + shape_to_string(x.shape()) + " incompatible with input_dim " +
                                std::to_string(spec.input_dim));
  }
  if (x.rows() == 0) fail(ErrorKind::kShape, "forward: empty batch");

  Var h = inputs;
  std::size_t p = 0;
  for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
    h = relu(add_bias(matmul(h, params[p]), params[p + 1]));
    p += 2;
  }
  if (spec.classifier == ClassifierKind::kPlain) {
    return add_bias(matmul(h, params[p]), params[p + 1]);
  }
  Var features = row_normalize(h);
  Var prototypes = row_normalize(params[p]);
  return scale(matmul(features, transpose(prototypes)), spec.cosine_scale);
}

Tensor logits(const ParameterSet& params, const ModelSpec& spec, const Tensor& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) vars.push_back(tape.constant(params.tensor(i)));
  Var out = forward(tape, vars, spec, tape.constant(inputs, "inputs"));
  return out.value();
}

}  // namespace sharplab
