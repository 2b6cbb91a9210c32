#include "sharplab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sharplab/error.hpp"

namespace sharplab {

ClassPriors ClassPriors::from_counts(std::vector<std::size_t> counts) {
  ClassPriors p;
  p.total_ = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (counts.empty() || p.total_ == 0) {
    fail(ErrorKind::kInvalidArgument, "class priors need at least one sample");
  }
  p.ratios_.resize(counts.size());
  for (std::size_t y = 0; y < counts.size(); ++y) {
    p.ratios_[y] = static_cast<double>(counts[y]) / static_cast<double>(p.total_);
  }
  p.counts_ = std::move(counts);
  return p;
}

ClassPriors ClassPriors::from_labels(std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      fail(ErrorKind::kInvalidArgument, "label " + std::to_string(y) + " out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return from_counts(std::move(counts));
}

double ClassPriors::min_ratio() const { return *std::min_element(ratios_.begin(), ratios_.end()); }

std::vector<std::size_t> ClassPriors::sorted_by_count() const {
  std::vector<std::size_t> order(counts_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [this](std::size_t a, std::size_t b) { return counts_[a] > counts_[b]; });
  return order;
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCE: return "CE";
    case LossKind::kLA: return "LA";
    case LossKind::kLDAM: return "LDAM";
    case LossKind::kVS: return "VS";
  }
  return "?";
}

void LossSpec::validate() const {
  if (!(tau >= 0.0)) fail(ErrorKind::kInvalidArgument, "loss tau must be >= 0");
  if (!(ldam_max_margin > 0.0)) fail(ErrorKind::kInvalidArgument, "ldam_max_margin must be > 0");
  if (!(vs_exponent >= 0.0)) fail(ErrorKind::kInvalidArgument, "vs_exponent must be >= 0");
  if (drw && !(drw->beta >= 0.0 && drw->beta < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "DRW beta must lie in [0, 1)");
  }
}

double PerClassLosses::total() const {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

namespace {

void require_nonzero_counts(const ClassPriors& priors, const LossSpec& spec) {
  for (std::size_t y = 0; y < priors.num_classes(); ++y) {
    if (priors.counts()[y] == 0) {
      fail(ErrorKind::kInvalidArgument,
           std::string(to_string(spec.kind)) + " loss: class " + std::to_string(y) +
               " has zero training samples (log 0); smooth the counts, e.g. add 1 to every class");
    }
  }
}

std::vector<double> log_priors(const ClassPriors& priors) {
  std::vector<double> out(priors.num_classes());
  for (std::size_t y = 0; y < out.size(); ++y) out[y] = std::log(priors.ratio(y));
  return out;
}

}  // namespace

std::vector<double> drw_class_weights(const LossSpec& spec, const ClassPriors& priors, std::size_t epoch) {
  const std::size_t c = priors.num_classes();
  std::vector<double> w(c, 1.0);
  if (!spec.drw || epoch < spec.drw->start_epoch) return w;
  const double beta = spec.drw->beta;
  double acc = 0.0;
  std::size_t present = 0;
  for (std::size_t y = 0; y < c; ++y) {
    const std::size_t n = priors.counts()[y];
    if (n == 0) {
      w[y] = 0.0;
      continue;
    }
    w[y] = (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n)));
    acc += w[y];
    ++present;
  }
  const double norm = static_cast<double>(present) / acc;
  for (double& v : w) v *= norm;
  return w;
}

Var adjusted_logits(Var logits, std::span<const int> labels, const LossSpec& spec, const ClassPriors& priors) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.cols() != priors.num_classes()) {
    fail(ErrorKind::kShape, "adjusted_logits: logits " + shape_to_string(z.shape()) + " vs " +
                                std::to_string(priors.num_classes()) + " classes");
  }
  Tape& tape = *logits.tape;
  const std::size_t b = z.rows(), c = z.cols();
  switch (spec.kind) {
    case LossKind::kCE:
      return logits;
    case LossKind::kLA: {
      require_nonzero_counts(priors, spec);
      auto shift = log_priors(priors);
      for (double& v : shift) v *= spec.tau;
      return add_bias(logits, tape.constant(Tensor::vector(std::move(shift)), "la_shift"));
    }
    case LossKind::kLDAM: {
      require_nonzero_counts(priors, spec);
      if (labels.size() != b) fail(ErrorKind::kShape, "adjusted_logits: LDAM needs one label per row");
      std::vector<double> quartic(c);
      for (std::size_t y = 0; y < c; ++y) {
        quartic[y] = std::pow(static_cast<double>(priors.counts()[y]), -0.25);
      }
      const double largest = *std::max_element(quartic.begin(), quartic.end());
      Tensor margins({b, c});
      for (std::size_t i = 0; i < b; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= c) fail(ErrorKind::kInvalidArgument, "label out of range in LDAM adjustment");
        margins.at(i, y) = -spec.ldam_max_margin * quartic[y] / largest;
      }
      return add(logits, tape.constant(std::move(margins), "ldam_margin"));
    }
    case LossKind::kVS: {
      require_nonzero_counts(priors, spec);
      const double largest = static_cast<double>(*std::max_element(priors.counts().begin(), priors.counts().end()));
      Tensor mult({b, c});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t y = 0; y < c; ++y) {
          mult.at(i, y) = std::pow(static_cast<double>(priors.counts()[y]) / largest, spec.vs_exponent);
        }
      auto shift = log_priors(priors);
      for (double& v : shift) v *= spec.tau;
      return add_bias(mul(logits, tape.constant(std::move(mult), "vs_scale")),
                      tape.constant(Tensor::vector(std::move(shift)), "vs_shift"));
    }
  }
  return logits;
}

Tensor adjusted_logits(const Tensor& logits, std::span<const int> labels, const LossSpec& spec,
                       const ClassPriors& priors, std::size_t /*epoch*/) {
  Tape tape;
  return adjusted_logits(tape.constant(logits), labels, spec, priors).value();
}

Var weighted_class_loss(Var logits, std::span<const int> labels, const LossSpec& spec, const ClassPriors& priors,
                        std::size_t epoch, std::span<const double> class_weights) {
  const std::size_t b = labels.size();
  if (b == 0) fail(ErrorKind::kInvalidArgument, "loss over an empty batch");
  if (class_weights.size() != priors.num_classes()) {
    fail(ErrorKind::kInvalidArgument, "class weight vector has length " + std::to_string(class_weights.size()) +
                                          ", expected " + std::to_string(priors.num_classes()));
  }
  const auto drw = drw_class_weights(spec, priors, epoch);
  Tensor coeff({b});
  for (std::size_t i = 0; i < b; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= priors.num_classes()) {
      fail(ErrorKind::kInvalidArgument, "label " + std::to_string(labels[i]) + " out of range");
    }
    coeff[i] = -class_weights[y] * drw[y] / static_cast<double>(b);
  }
  Tape& tape = *logits.tape;
  Var logp = gather(log_softmax(adjusted_logits(logits, labels, spec, priors)), labels);
  return sum(mul(logp, tape.constant(std::move(coeff), "class_coeff")));
}

std::vector<double> sample_losses(const Tensor& logits, std::span<const int> labels, const LossSpec& spec,
                                  const ClassPriors& priors, std::size_t epoch) {
  if (labels.empty()) fail(ErrorKind::kInvalidArgument, "loss over an empty batch");
  Tape tape;
  Var logp = gather(log_softmax(adjusted_logits(tape.constant(logits), labels, spec, priors)), labels);
  const auto drw = drw_class_weights(spec, priors, epoch);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = -logp.value()[i] * drw[static_cast<std::size_t>(labels[i])];
  }
  return out;
}

PerClassLosses per_class_losses(const Tensor& logits, std::span<const int> labels, const LossSpec& spec,
                                const ClassPriors& priors, std::size_t epoch) {
  const auto losses = sample_losses(logits, labels, spec, priors, epoch);
  PerClassLosses out{std::vector<double>(priors.num_classes(), 0.0)};
  const double b = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.values[static_cast<std::size_t>(labels[i])] += losses[i] / b;
  }
  return out;
}

FocalWeights focal_weights(std::span<const double> ratios, double gamma) {
  if (!(gamma >= 0.0)) fail(ErrorKind::kInvalidArgument, "focal exponent gamma must be >= 0");
  FocalWeights fw{std::vector<double>(ratios.size()), gamma};
  // std::pow(0, 0) == 1, so a class with pi = 1 keeps weight 1 at gamma = 0.
  for (std::size_t i = 0; i < ratios.size(); ++i) fw.values[i] = std::pow(1.0 - ratios[i], gamma);
  return fw;
}

FocalWeights focal_weights(const ClassPriors& priors, double gamma) {
  return focal_weights(priors.ratios(), gamma);
}

double weighted_loss(const PerClassLosses& pcl, std::span<const double> weights) {
  if (weights.size() != pcl.values.size()) {
    fail(ErrorKind::kInvalidArgument, "weighted_loss: " + std::to_string(weights.size()) + " weights for " +
                                          std::to_string(pcl.values.size()) + " classes");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * pcl.values[i];
  return acc;
}

}  // namespace sharplab
