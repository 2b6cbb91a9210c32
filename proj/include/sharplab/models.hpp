#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/parameter_set.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

enum class ClassifierKind { kPlain, kCosine };

struct ModelSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 2;
  ClassifierKind classifier = ClassifierKind::kPlain;
  double cosine_scale = 16.0;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// He-initialized MLP parameters, zero biases. Layer i owns "fc{i}.weight"
/// (in, out) and "fc{i}.bias"; the classifier is "head.weight" (in, C) plus
/// "head.bias" for the plain kind, or "head.weight" (C, in) for the cosine kind.
ParameterSet init_params(const ModelSpec& spec);

/// Records the forward pass on `tape`; `params` are the bound parameter vars.
Var forward(Tape& tape, std::span<const Var> params, const ModelSpec& spec, Var inputs);

/// Logits (B x C) without keeping the tape.
Tensor logits(const ParameterSet& params, const ModelSpec& spec, const Tensor& inputs);

}  // namespace sharplab
