#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

/// Per-class training counts and the ratios pi_y = n_y / n.
class ClassPriors {
 public:
  ClassPriors() = default;
  static ClassPriors from_counts(std::vector<std::size_t> counts);
  static ClassPriors from_labels(std::span<const int> labels, std::size_t num_classes);

  std::size_t num_classes() const { return counts_.size(); }
  std::size_t total() const { return total_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  const std::vector<double>& ratios() const { return ratios_; }
  double ratio(std::size_t y) const { return ratios_.at(y); }
  /// Smallest class ratio, pi_C when classes are sorted by count.
  double min_ratio() const;
  /// Class ids ordered by decreasing count (ties by id).
  std::vector<std::size_t> sorted_by_count() const;

 private:
  std::vector<std::size_t> counts_;
  std::vector<double> ratios_;
  std::size_t total_ = 0;
};

enum class LossKind { kCE, kLA, kLDAM, kVS };

struct DrwSchedule {
  std::size_t start_epoch = 0;
  double beta = 0.9999;
};

struct LossSpec {
  LossKind kind = LossKind::kCE;
  double tau = 1.0;
  double ldam_max_margin = 0.5;
  double vs_exponent = 0.15;
  std::optional<DrwSchedule> drw;

  void validate() const;
};

const char* to_string(LossKind kind);

/// Class-wise losses L^y = (1/B) * sum over samples of class y. Sums to the batch loss.
struct PerClassLosses {
  std::vector<double> values;

  double total() const;
};

struct FocalWeights {
  std::vector<double> values;
  double gamma = 0.0;
};

/// Class-balanced DRW weights (1-beta)/(1-beta^n_y) scaled to mean 1 over classes
/// with n_y > 0, or all ones when DRW is inactive at `epoch`.
std::vector<double> drw_class_weights(const LossSpec& spec, const ClassPriors& priors, std::size_t epoch);

/// Recorded form of the loss-specific logit adjustment.
Var adjusted_logits(Var logits, std::span<const int> labels, const LossSpec& spec, const ClassPriors& priors);
Tensor adjusted_logits(const Tensor& logits, std::span<const int> labels, const LossSpec& spec,
                       const ClassPriors& priors, std::size_t epoch);

/// Records sum_i class_weights[y_i] * drw[y_i] * loss_i / B as a scalar node.
Var weighted_class_loss(Var logits, std::span<const int> labels, const LossSpec& spec, const ClassPriors& priors,
                        std::size_t epoch, std::span<const double> class_weights);

/// Per-sample losses (DRW weights applied).
std::vector<double> sample_losses(const Tensor& logits, std::span<const int> labels, const LossSpec& spec,
                                  const ClassPriors& priors, std::size_t epoch);

PerClassLosses per_class_losses(const Tensor& logits, std::span<const int> labels, const LossSpec& spec,
                                const ClassPriors& priors, std::size_t epoch);

FocalWeights focal_weights(const ClassPriors& priors, double gamma);
FocalWeights focal_weights(std::span<const double> ratios, double gamma);

double weighted_loss(const PerClassLosses& pcl, std::span<const double> weights);

}  // namespace sharplab
