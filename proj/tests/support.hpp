#pragma once

#include <initializer_list>
#include <memory>
#include <random>
#include <vector>

#include "sharplab/objective.hpp"

namespace testing {

using namespace sharplab;

/// L^i(w) = 1/2 sum_j a[i][j] w_j^2 over a single parameter vector "w".
class QuadraticObjective final : public ClassObjective {
 public:
  explicit QuadraticObjective(std::vector<std::vector<double>> a, std::vector<std::size_t> presence = {})
      : a_(std::move(a)), presence_(std::move(presence)) {
    if (presence_.empty()) presence_.assign(a_.size(), 1);
  }
  QuadraticObjective(std::initializer_list<std::vector<double>> a, std::vector<std::size_t> presence = {})
      : QuadraticObjective(std::vector<std::vector<double>>(a), std::move(presence)) {}

  std::size_t num_classes() const override { return a_.size(); }
  std::vector<std::size_t> class_presence() const override { return presence_; }

  Var record(Tape& tape, std::span<const Var> params, std::span<const double> weights) const override {
    const Var w = params[0];
    std::vector<double> c(w.value().size(), 0.0);
    for (std::size_t i = 0; i < a_.size(); ++i) {
      for (std::size_t j = 0; j < c.size(); ++j) c[j] += 0.5 * weights[i] * a_[i][j];
    }
    return sum(mul(mul(w, w), tape.constant(Tensor(w.value().shape(), c))));
  }

  static ParameterSet params(std::vector<double> w) {
    ParameterSet p;
    p.add("w", Tensor::vector(std::move(w)));
    return p;
  }

 private:
  std::vector<std::vector<double>> a_;
  std::vector<std::size_t> presence_;
};

/// A random MLP classification problem. Heap-allocated because the objective
/// keeps references to the specs.
struct Instance {
  ModelSpec model;
  LossSpec loss;
  ClassPriors priors;
  ParameterSet params;
  std::unique_ptr<BatchObjective> objective;
};

inline std::unique_ptr<Instance> random_instance(std::uint64_t seed, LossSpec loss = {}, std::size_t classes = 4,
                                                 std::size_t batch = 12, std::vector<int> labels = {},
                                                 std::size_t epoch = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto inst = std::make_unique<Instance>();
  inst->model.input_dim = 5;
  inst->model.hidden_dims = {6};
  inst->model.num_classes = classes;
  inst->model.init_seed = seed;
  inst->loss = loss;
  std::vector<std::size_t> counts(classes);
  for (std::size_t c = 0; c < classes; ++c) counts[c] = 1 + rng() % 200;
  inst->priors = ClassPriors::from_counts(counts);
  inst->params = init_params(inst->model);
  // Non-zero biases so every primitive sees generic inputs.
  for (std::size_t i = 0; i < inst->params.count(); ++i) {
    for (double& v : inst->params.tensor(i).values()) v += 0.1 * normal(rng);
  }
  if (labels.empty()) {
    for (std::size_t b = 0; b < batch; ++b) labels.push_back(static_cast<int>(rng() % classes));
  }
  std::vector<double> x(labels.size() * inst->model.input_dim);
  for (double& v : x) v = normal(rng);
  inst->objective = std::make_unique<BatchObjective>(inst->model, inst->loss, inst->priors, epoch,
                                                     Tensor::matrix(labels.size(), inst->model.input_dim, x),
                                                     std::move(labels));
  return inst;
}

}  // namespace testing
