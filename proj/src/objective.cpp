#include "sharplab/objective.hpp"

#include <cmath>

#include "sharplab/error.hpp"

namespace sharplab {

ValueAndGradient value_and_gradient(const ClassObjective& objective, const ParameterSet& params,
                                    std::span<const double> class_weights) {
  Tape tape;
  auto vars = tape.bind(params);
  Var out = objective.record(tape, vars, class_weights);
  ValueAndGradient r;
  r.value = out.value().item();
  r.gradient = backward(tape, out);
  return r;
}

double evaluate(const ClassObjective& objective, const ParameterSet& params, std::span<const double> class_weights) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) vars.push_back(tape.constant(params.tensor(i)));
  return objective.record(tape, vars, class_weights).value().item();
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

std::vector<double> indicator(std::size_t n, std::span<const std::size_t> members) {
  std::vector<double> w(n, 0.0);
  for (std::size_t m : members) {
    if (m >= n) fail(ErrorKind::kInvalidArgument, "class id " + std::to_string(m) + " out of range");
    w[m] = 1.0;
  }
  return w;
}

BatchObjective::BatchObjective(const ModelSpec& model, const LossSpec& loss, const ClassPriors& priors,
                               std::size_t epoch, Tensor inputs, std::vector<int> labels)
    : model_(model), loss_(loss), priors_(priors), epoch_(epoch), inputs_(std::move(inputs)),
      labels_(std::move(labels)) {
  if (labels_.empty()) fail(ErrorKind::kInvalidArgument, "empty batch");
  if (inputs_.rank() != 2 || inputs_.rows() != labels_.size()) {
    fail(ErrorKind::kShape, "batch inputs " + shape_to_string(inputs_.shape()) + " do not match " +
                                std::to_string(labels_.size()) + " labels");
  }
  if (priors_.num_classes() != model_.num_classes) {
    fail(ErrorKind::kInvalidArgument, "priors cover " + std::to_string(priors_.num_classes()) +
                                          " classes, model has " + std::to_string(model_.num_classes));
  }
}

std::vector<std::size_t> BatchObjective::class_presence() const {
  std::vector<std::size_t> counts(model_.num_classes, 0);
  for (int y : labels_) {
    if (y < 0 || static_cast<std::size_t>(y) >= counts.size()) {
      fail(ErrorKind::kInvalidArgument, "label " + std::to_string(y) + " out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

Var BatchObjective::record(Tape& tape, std::span<const Var> params, std::span<const double> class_weights) const {
  Var z = forward(tape, params, model_, tape.constant(inputs_, "inputs"));
  return weighted_class_loss(z, labels_, loss_, priors_, epoch_, class_weights);
}

PerClassLosses BatchObjective::per_class(const ParameterSet& params) const {
  return per_class_losses(logits(params, model_, inputs_), labels_, loss_, priors_, epoch_);
}

}  // namespace sharplab
