#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/losses.hpp"
#include "sharplab/models.hpp"
#include "sharplab/parameter_set.hpp"

namespace sharplab {

/// A loss that decomposes into class-wise terms L^i, so that any weighting
/// sum_i c_i L^i(w) can be recorded as one scalar on a tape. Every optimizer
/// variant and every sharpness diagnostic is expressed through this.
class ClassObjective {
 public:
  virtual ~ClassObjective() = default;

  virtual std::size_t num_classes() const = 0;
  /// Number of batch samples per class; zero means the class is absent.
  virtual std::vector<std::size_t> class_presence() const = 0;
  virtual Var record(Tape& tape, std::span<const Var> params, std::span<const double> class_weights) const = 0;
};

struct ValueAndGradient {
  double value = 0.0;
  ParameterSet gradient;
};

/// One backward pass.
ValueAndGradient value_and_gradient(const ClassObjective& objective, const ParameterSet& params,
                                    std::span<const double> class_weights);
/// Forward only; never touches the backward-pass counter.
double evaluate(const ClassObjective& objective, const ParameterSet& params, std::span<const double> class_weights);

std::vector<double> ones(std::size_t n);
std::vector<double> indicator(std::size_t n, std::span<const std::size_t> members);

/// Mini-batch objective of an MLP classifier under a long-tailed loss.
class BatchObjective final : public ClassObjective {
 public:
  BatchObjective(const ModelSpec& model, const LossSpec& loss, const ClassPriors& priors, std::size_t epoch,
                 Tensor inputs, std::vector<int> labels);

  std::size_t num_classes() const override { return model_.num_classes; }
  std::vector<std::size_t> class_presence() const override;
  Var record(Tape& tape, std::span<const Var> params, std::span<const double> class_weights) const override;

  const Tensor& inputs() const { return inputs_; }
  const std::vector<int>& labels() const { return labels_; }
  PerClassLosses per_class(const ParameterSet& params) const;

 private:
  const ModelSpec& model_;
  const LossSpec& loss_;
  const ClassPriors& priors_;
  std::size_t epoch_;
  Tensor inputs_;
  std::vector<int> labels_;
};

}  // namespace sharplab
