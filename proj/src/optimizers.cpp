#include "sharplab/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sharplab/error.hpp"

namespace sharplab {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kSGD: return "sgd";
    case Variant::kSAM: return "sam";
    case Variant::kImbSAM: return "imbsam";
    case Variant::kCCSAM: return "ccsam";
    case Variant::kFocalSAM: return "focalsam";
    case Variant::kWeightedCustom: return "weighted";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kSGD, Variant::kSAM, Variant::kImbSAM, Variant::kCCSAM, Variant::kFocalSAM,
                    Variant::kWeightedCustom}) {
    if (name == to_string(v)) return v;
  }
  fail(ErrorKind::kConfig, "unknown optimizer variant '" + name +
                               "' (expected sgd, sam, imbsam, ccsam, focalsam or weighted)");
}

void SharpnessConfig::validate(std::size_t num_classes) const {
  if (!(rho >= 0.0)) fail(ErrorKind::kInvalidArgument, "rho must be >= 0");
  if (!(lambda >= 0.0)) fail(ErrorKind::kInvalidArgument, "lambda must be >= 0");
  if (!(gamma >= 0.0)) fail(ErrorKind::kInvalidArgument, "gamma must be >= 0");
  for (std::size_t t : tail_set) {
    if (t >= num_classes) fail(ErrorKind::kInvalidArgument, "tail_set contains class " + std::to_string(t));
  }
  if (variant == Variant::kCCSAM) {
    if (rho_per_class.size() != num_classes) {
      fail(ErrorKind::kInvalidArgument, "CC-SAM needs one radius per class");
    }
    for (double r : rho_per_class) {
      if (!(r >= 0.0)) fail(ErrorKind::kInvalidArgument, "CC-SAM radii must be >= 0");
    }
  }
  if (variant == Variant::kWeightedCustom && explicit_weights.size() != num_classes) {
    fail(ErrorKind::kInvalidArgument, "weighted variant needs one explicit weight per class");
  }
}

OptimizerState::OptimizerState(SgdOptions options) : options_(options) {
  if (!(options_.learning_rate >= 0.0)) fail(ErrorKind::kInvalidArgument, "learning rate must be >= 0");
  if (!(options_.momentum >= 0.0 && options_.momentum < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "momentum must lie in [0, 1)");
  }
  if (!(options_.weight_decay >= 0.0)) fail(ErrorKind::kInvalidArgument, "weight decay must be >= 0");
}

void OptimizerState::apply(ParameterSet& params, const ParameterSet& gradient) {
  ParameterSet g = gradient;
  if (options_.weight_decay != 0.0) axpy(options_.weight_decay, params, g);
  if (options_.momentum != 0.0) {
    if (!buffer_) {
      buffer_ = std::move(g);
    } else {
      if (!buffer_->same_layout(params)) fail(ErrorKind::kShape, "momentum buffer layout mismatch");
      for (std::size_t i = 0; i < buffer_->count(); ++i) {
        auto& b = buffer_->tensor(i).raw();
        const auto& gi = g.tensor(i).raw();
        for (std::size_t j = 0; j < b.size(); ++j) b[j] = options_.momentum * b[j] + gi[j];
      }
    }
    axpy(-options_.learning_rate, *buffer_, params);
  } else {
    axpy(-options_.learning_rate, g, params);
  }
  ++steps_;
}

namespace {

void require_finite(const ParameterSet& g, const char* where) {
  if (!g.all_finite()) fail(ErrorKind::kNumeric, std::string(where) + ": non-finite gradient");
}

/// Gradient at w + eps on a scratch copy; `params` is never modified.
ValueAndGradient perturbed_gradient(const ClassObjective& objective, const ParameterSet& params,
                                    const Perturbation& eps, std::span<const double> weights,
                                    double unperturbed_loss, const char* where) {
  ParameterSet shifted = plus(params, eps.epsilon);
  ValueAndGradient r = value_and_gradient(objective, shifted, weights);
  if (!std::isfinite(r.value)) {
    fail(ErrorKind::kNumeric, std::string(where) + ": non-finite loss at perturbed point (loss at w = " +
                                  std::to_string(unperturbed_loss) + ", at w+eps = " + std::to_string(r.value) + ")");
  }
  require_finite(r.gradient, where);
  return r;
}

class CounterScope {
 public:
  CounterScope() : start_(backward_pass_count()) {}
  std::uint64_t elapsed() const { return backward_pass_count() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace

Perturbation compute_perturbation(const ClassObjective& objective, const ParameterSet& params,
                                  std::span<const double> weights, double rho) {
  if (!(rho >= 0.0)) fail(ErrorKind::kInvalidArgument, "perturbation radius must be >= 0");
  ValueAndGradient vg = value_and_gradient(objective, params, weights);
  require_finite(vg.gradient, "compute_perturbation");
  Perturbation p;
  p.loss = vg.value;
  p.gradient_norm = l2_norm(vg.gradient);
  if (p.gradient_norm < kZeroGradientNorm) {
    p.epsilon = params.zeros_like();
    return p;
  }
  p.epsilon = scaled(vg.gradient, rho / p.gradient_norm);
  p.norm = l2_norm(p.epsilon);
  return p;
}

StepReport sgd_step(const ClassObjective& objective, ParameterSet& params, OptimizerState& state) {
  CounterScope counter;
  auto all = ones(objective.num_classes());
  ValueAndGradient vg = value_and_gradient(objective, params, all);
  require_finite(vg.gradient, "sgd_step");
  state.apply(params, vg.gradient);
  return {counter.elapsed(), 0.0, {}};
}

StepReport sam_step(const ClassObjective& objective, ParameterSet& params, double rho, OptimizerState& state) {
  CounterScope counter;
  auto all = ones(objective.num_classes());
  Perturbation eps = compute_perturbation(objective, params, all, rho);
  ValueAndGradient g = perturbed_gradient(objective, params, eps, all, eps.loss, "sam_step");
  state.apply(params, g.gradient);
  return {counter.elapsed(), eps.norm, {}};
}

StepReport imbsam_step(const ClassObjective& objective, ParameterSet& params, std::span<const std::size_t> tail_set,
                       double rho, OptimizerState& state) {
  CounterScope counter;
  const std::size_t c = objective.num_classes();
  const auto tail = indicator(c, tail_set);
  std::vector<double> head(c);
  for (std::size_t i = 0; i < c; ++i) head[i] = 1.0 - tail[i];

  Perturbation eps = compute_perturbation(objective, params, tail, rho);
  ValueAndGradient head_grad = value_and_gradient(objective, params, head);
  require_finite(head_grad.gradient, "imbsam_step");
  ValueAndGradient tail_grad = perturbed_gradient(objective, params, eps, tail, eps.loss, "imbsam_step");

  ParameterSet g = head_grad.gradient;
  axpy(1.0, tail_grad.gradient, g);
  state.apply(params, g);
  return {counter.elapsed(), eps.norm, {}};
}

StepReport ccsam_step(const ClassObjective& objective, ParameterSet& params, std::span<const double> rho_per_class,
                      std::span<const double> class_ratios, OptimizerState& state) {
  CounterScope counter;
  const std::size_t c = objective.num_classes();
  if (rho_per_class.size() != c || class_ratios.size() != c) {
    fail(ErrorKind::kInvalidArgument, "ccsam_step: radii and ratios need one entry per class");
  }
  const auto presence = objective.class_presence();
  StepReport report;
  ParameterSet total = params.zeros_like();
  for (std::size_t i = 0; i < c; ++i) {
    if (presence[i] == 0) {
      report.skipped_classes.push_back(i);
      continue;
    }
    if (!(class_ratios[i] > 0.0)) {
      fail(ErrorKind::kInvalidArgument, "ccsam_step: class " + std::to_string(i) + " present with zero prior");
    }
    const auto only_i = indicator(c, std::span<const std::size_t>(&i, 1));
    Perturbation eps = compute_perturbation(objective, params, only_i, rho_per_class[i]);
    ValueAndGradient g = perturbed_gradient(objective, params, eps, only_i, eps.loss, "ccsam_step");
    axpy(1.0 / class_ratios[i], g.gradient, total);
    report.perturbation_norm = std::max(report.perturbation_norm, eps.norm);
  }
  state.apply(params, total);
  report.backward_passes = counter.elapsed();
  return report;
}

std::vector<double> sharpness_weights(const SharpnessConfig& cfg, std::span<const double> class_ratios) {
  switch (cfg.variant) {
    case Variant::kFocalSAM: return focal_weights(class_ratios, cfg.gamma).values;
    case Variant::kWeightedCustom: return cfg.explicit_weights;
    case Variant::kImbSAM: return indicator(class_ratios.size(), cfg.tail_set);
    default: return ones(class_ratios.size());
  }
}

StepReport focal_sam_step(const ClassObjective& objective, ParameterSet& params, const SharpnessConfig& cfg,
                          std::span<const double> class_ratios, OptimizerState& state) {
  if (cfg.variant != Variant::kFocalSAM && cfg.variant != Variant::kWeightedCustom) {
    fail(ErrorKind::kInvalidArgument, "focal_sam_step requires the focalsam or weighted variant");
  }
  const std::size_t c = objective.num_classes();
  if (class_ratios.size() != c) fail(ErrorKind::kInvalidArgument, "focal_sam_step: one ratio per class required");
  const auto w = sharpness_weights(cfg, class_ratios);
  if (w.size() != c) fail(ErrorKind::kInvalidArgument, "focal_sam_step: one weight per class required");

  CounterScope counter;
  Perturbation eps = compute_perturbation(objective, params, w, cfg.rho);

  // g2 = grad(L - lambda L^w) at w, recorded as one objective with weights 1 - lambda w_i.
  std::vector<double> residual(c);
  for (std::size_t i = 0; i < c; ++i) residual[i] = 1.0 - cfg.lambda * w[i];
  ValueAndGradient g2 = value_and_gradient(objective, params, residual);
  require_finite(g2.gradient, "focal_sam_step");

  ValueAndGradient g1 = perturbed_gradient(objective, params, eps, w, eps.loss, "focal_sam_step");

  ParameterSet g = g2.gradient;
  axpy(cfg.lambda, g1.gradient, g);
  state.apply(params, g);
  return {counter.elapsed(), eps.norm, {}};
}

StepReport sharpness_step(const ClassObjective& objective, ParameterSet& params, const SharpnessConfig& cfg,
                          std::span<const double> class_ratios, OptimizerState& state) {
  switch (cfg.variant) {
    case Variant::kSGD: return sgd_step(objective, params, state);
    case Variant::kSAM: return sam_step(objective, params, cfg.rho, state);
    case Variant::kImbSAM: return imbsam_step(objective, params, cfg.tail_set, cfg.rho, state);
    case Variant::kCCSAM: return ccsam_step(objective, params, cfg.rho_per_class, class_ratios, state);
    case Variant::kFocalSAM:
    case Variant::kWeightedCustom: return focal_sam_step(objective, params, cfg, class_ratios, state);
  }
  fail(ErrorKind::kInvalidArgument, "unknown variant");
}

void RhoSchedule::validate() const {
  if (!(base >= 0.0)) fail(ErrorKind::kInvalidArgument, "rho schedule base must be >= 0");
  if (!(multiplier >= 1.0)) fail(ErrorKind::kInvalidArgument, "rho schedule multiplier must be >= 1");
}

double rho_at(const RhoSchedule& schedule, std::size_t epoch) {
  if (schedule.enabled && epoch >= schedule.milestone_epoch) return schedule.base * schedule.multiplier;
  return schedule.base;
}

std::vector<double> ccsam_radii(const ClassPriors& priors, double rho_head, double rho_tail) {
  if (!(rho_head >= 0.0) || !(rho_tail >= 0.0)) fail(ErrorKind::kInvalidArgument, "CC-SAM radii must be >= 0");
  const auto& counts = priors.counts();
  std::size_t hi = 0, lo = std::numeric_limits<std::size_t>::max();
  for (std::size_t n : counts) {
    if (n == 0) continue;
    hi = std::max(hi, n);
    lo = std::min(lo, n);
  }
  std::vector<double> radii(counts.size(), rho_tail);
  if (hi == 0 || hi == lo) {
    std::fill(radii.begin(), radii.end(), rho_head);
    return radii;
  }
  const double span = std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo));
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (counts[y] == 0) continue;
    const double t = (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(counts[y]))) / span;
    radii[y] = rho_head + t * (rho_tail - rho_head);
  }
  return radii;
}

}  // namespace sharplab
