#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/objective.hpp"
#include "sharplab/parameter_set.hpp"

namespace sharplab {

/// Linear operator v -> H v on flat parameter vectors.
using HvpFn = std::function<std::vector<double>(std::span<const double>)>;

/// 1e-3 * (1 + ||w||).
double default_hvp_step(const ParameterSet& params);

/// Central-difference Hessian-vector product of sum_i weights_i L^i:
/// (grad(w + h v/|v|) - grad(w - h v/|v|)) / 2h * |v|. Two backward passes.
ParameterSet hvp(const ClassObjective& objective, const ParameterSet& params, std::span<const double> weights,
                 const ParameterSet& v, double h);

HvpFn make_hvp(const ClassObjective& objective, const ParameterSet& params, std::vector<double> weights, double h);

enum class ProbeKind { kRademacher, kGaussian };

struct TraceEstimate {
  double trace = 0.0;
  std::size_t probes = 0;
  /// Standard error of the probe mean (0 for one probe).
  double std_error = 0.0;
};

TraceEstimate hutchinson_trace(const HvpFn& hvp_fn, std::size_t k_params, std::size_t probes, ProbeKind kind,
                               std::uint64_t seed);

struct EigenEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  /// ||H v - value * v|| for the final unit iterate.
  double residual = 0.0;
};

/// Power iteration returning the Rayleigh quotient of the dominant eigenvector.
/// Stops once residual <= tol * |value|.
EigenEstimate top_eigenvalue(const HvpFn& hvp_fn, std::size_t k_params, std::size_t iterations, double tol,
                             std::uint64_t seed);

enum class ClassGroup { kAll, kHead, kMedium, kTail };
const char* to_string(ClassGroup g);

struct HessianStats {
  double trace_estimate = 0.0;
  std::size_t trace_probe_count = 0;
  double trace_std_error = 0.0;
  double top_eigenvalue = 0.0;
  std::size_t power_iterations = 0;
  double power_residual = 0.0;
  ClassGroup class_group = ClassGroup::kAll;
};

struct HessianOptions {
  std::size_t probes = 10;
  ProbeKind probe_kind = ProbeKind::kRademacher;
  std::size_t power_iterations = 20;
  double power_tol = 1e-3;
  /// <= 0 selects default_hvp_step.
  double fd_step = 0.0;
  std::uint64_t seed = 0;
};

/// Trace and top eigenvalue of the Hessian of sum_i weights_i L^i.
HessianStats hessian_stats(const ClassObjective& objective, const ParameterSet& params,
                           std::span<const double> weights, ClassGroup group, const HessianOptions& options);

enum class SharpnessMode { kOwnGradient, kSharedWeighted };

struct ClassSharpness {
  std::size_t class_id = 0;
  double value = 0.0;
  SharpnessMode source = SharpnessMode::kOwnGradient;
  bool absent = false;
};

/// L^i(w + eps) - L^i(w) for every class. kOwnGradient perturbs along each
/// class's own gradient; kSharedWeighted uses one eps from sum_i weights_i L^i.
std::vector<ClassSharpness> class_sharpness(const ClassObjective& objective, const ParameterSet& params, double rho,
                                            SharpnessMode mode, std::span<const double> shared_weights);

struct LossSlice2D {
  ParameterSet direction_x;
  ParameterSet direction_y;
  double half_width = 0.0;
  std::size_t steps = 0;
  /// Grid coordinates along each axis, length `steps`.
  std::vector<double> coords;
  /// values[i * steps + j] = L(w + coords[i] dx + coords[j] dy).
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * steps + j]; }
};

LossSlice2D loss_slice_2d(const ClassObjective& objective, const ParameterSet& params,
                          std::span<const double> weights, double half_width, std::size_t steps, std::uint64_t seed);

}  // namespace sharplab
