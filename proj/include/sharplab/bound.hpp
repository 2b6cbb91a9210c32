#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sharplab {

/// Inputs to the O(1/n) generalization bound for the focal-sharpness objective.
struct BoundInputs {
  /// Class ratios pi_i; C = ratios.size(), pi_C = min ratio.
  std::vector<double> ratios;
  double gamma = 0.0;
  double lambda = 1.0;
  double rho = 0.05;
  /// Upper bound on the per-sample loss.
  double loss_bound = 1.0;
  std::size_t num_params = 1;
  std::size_t num_samples = 1;
  double delta = 0.05;
  double weight_norm = 0.0;
  /// Measured L_S^FS(w).
  double objective = 0.0;
  /// Measured trace of the Hessian of L^gamma at w.
  double hessian_trace = 0.0;

  void validate() const;
};

/// total = term_I - term_II + term_III. The little-o remainder of the formal
/// statement is not evaluated; `remainder_omitted` records that.
struct BoundBreakdown {
  double term_I = 0.0;
  /// Bernstein addend, already included in term_I.
  double bernstein = 0.0;
  double term_II = 0.0;
  double term_III = 0.0;
  double total = 0.0;
  bool remainder_omitted = true;
};

/// sum_i (1 - pi_i)^gamma pi_i
double psi(std::span<const double> ratios, double gamma);
double b_prime(std::span<const double> ratios, double gamma, double loss_bound);
/// rho / (sqrt(k) + sqrt(2 ln n))
double sigma_q(double rho, std::size_t k, double n);

BoundBreakdown bound_breakdown(const BoundInputs& in);

}  // namespace sharplab
