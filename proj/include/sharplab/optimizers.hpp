#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/losses.hpp"
#include "sharplab/objective.hpp"
#include "sharplab/parameter_set.hpp"

namespace sharplab {

enum class Variant { kSGD, kSAM, kImbSAM, kCCSAM, kFocalSAM, kWeightedCustom };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

/// Hyperparameters for every member of the SAM family.
struct SharpnessConfig {
  Variant variant = Variant::kSGD;
  double rho = 0.05;
  double lambda = 1.0;
  double gamma = 0.0;
  std::vector<std::size_t> tail_set;      // ImbSAM
  std::vector<double> rho_per_class;      // CC-SAM
  std::vector<double> explicit_weights;   // WeightedCustom

  void validate(std::size_t num_classes) const;
};

struct Perturbation {
  ParameterSet epsilon;
  double norm = 0.0;
  double gradient_norm = 0.0;
  /// Weighted loss at the unperturbed point, from the same backward pass.
  double loss = 0.0;
};

/// Gradient norms below this produce a zero perturbation.
inline constexpr double kZeroGradientNorm = 1e-12;

struct SgdOptions {
  double learning_rate = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Base optimizer: SGD with heavy-ball momentum and L2 weight decay, applied to
/// whatever composite gradient the sharpness step produced.
class OptimizerState {
 public:
  explicit OptimizerState(SgdOptions options);

  void apply(ParameterSet& params, const ParameterSet& gradient);

  const SgdOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::size_t steps() const { return steps_; }
  const std::optional<ParameterSet>& momentum_buffer() const { return buffer_; }

 private:
  SgdOptions options_;
  std::optional<ParameterSet> buffer_;
  std::size_t steps_ = 0;
};

struct StepReport {
  std::uint64_t backward_passes = 0;
  double perturbation_norm = 0.0;
  /// Classes absent from the batch (CC-SAM skips them).
  std::vector<std::size_t> skipped_classes;
};

/// rho * grad / ||grad|| of sum_i weights_i L^i at `params`. One backward pass.
Perturbation compute_perturbation(const ClassObjective& objective, const ParameterSet& params,
                                  std::span<const double> weights, double rho);

StepReport sgd_step(const ClassObjective& objective, ParameterSet& params, OptimizerState& state);

StepReport sam_step(const ClassObjective& objective, ParameterSet& params, double rho, OptimizerState& state);

StepReport imbsam_step(const ClassObjective& objective, ParameterSet& params, std::span<const std::size_t> tail_set,
                       double rho, OptimizerState& state);

/// Per-class perturbations with radii rho_i; gradients weighted by 1/pi_i.
StepReport ccsam_step(const ClassObjective& objective, ParameterSet& params, std::span<const double> rho_per_class,
                      std::span<const double> class_ratios, OptimizerState& state);

/// Weighted-sharpness step: g = grad(L - lambda L^w)|_w + lambda grad(L^w)|_{w+eps}, with
/// focal weights (1-pi_i)^gamma for FocalSAM or cfg.explicit_weights for WeightedCustom.
StepReport focal_sam_step(const ClassObjective& objective, ParameterSet& params, const SharpnessConfig& cfg,
                          std::span<const double> class_ratios, OptimizerState& state);

/// Dispatches on cfg.variant.
StepReport sharpness_step(const ClassObjective& objective, ParameterSet& params, const SharpnessConfig& cfg,
                          std::span<const double> class_ratios, OptimizerState& state);

/// Class weights that define the perturbation direction for `cfg`.
std::vector<double> sharpness_weights(const SharpnessConfig& cfg, std::span<const double> class_ratios);

struct RhoSchedule {
  double base = 0.05;
  std::size_t milestone_epoch = 0;
  double multiplier = 2.0;
  bool enabled = false;

  void validate() const;
};

double rho_at(const RhoSchedule& schedule, std::size_t epoch);

/// CC-SAM radii growing from rho_head (largest class) to rho_tail (smallest),
/// linear in log class count.
std::vector<double> ccsam_radii(const ClassPriors& priors, double rho_head, double rho_tail);

}  // namespace sharplab
