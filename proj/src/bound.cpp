#include "sharplab/bound.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sharplab/error.hpp"

namespace sharplab {

void BoundInputs::validate() const {
  if (ratios.empty()) fail(ErrorKind::kInvalidArgument, "bound: no class ratios");
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::kInvalidArgument, "bound: delta must lie in (0, 1)");
  if (!(loss_bound > 0.0)) fail(ErrorKind::kInvalidArgument, "bound: loss bound B must be > 0");
  if (num_samples < 1) fail(ErrorKind::kInvalidArgument, "bound: n must be >= 1");
  if (num_params < 1) fail(ErrorKind::kInvalidArgument, "bound: k must be >= 1");
  if (!(*std::min_element(ratios.begin(), ratios.end()) > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "bound: smallest class ratio must be > 0");
  }
  if (!(gamma >= 0.0) || !(lambda >= 0.0)) fail(ErrorKind::kInvalidArgument, "bound: gamma and lambda must be >= 0");
  if (rho == 0.0) fail(ErrorKind::kInvalidArgument, "bound: rho = 0 makes the complexity term diverge");
  if (!(rho > 0.0)) fail(ErrorKind::kInvalidArgument, "bound: rho must be > 0");
}

double psi(std::span<const double> ratios, double gamma) {
  if (!(gamma >= 0.0)) fail(ErrorKind::kInvalidArgument, "psi: gamma must be >= 0");
  // Neumaier summation keeps sum_i pi_i = 1 exact at gamma = 0 for count-derived priors.
  double acc = 0.0;
  double carry = 0.0;
  for (double p : ratios) {
    const double term = std::pow(1.0 - p, gamma) * p;
    const double t = acc + term;
    carry += std::abs(acc) >= std::abs(term) ? (acc - t) + term : (term - t) + acc;
    acc = t;
  }
  return acc + carry;
}

double b_prime(std::span<const double> ratios, double gamma, double loss_bound) {
  if (!(loss_bound > 0.0)) fail(ErrorKind::kInvalidArgument, "b_prime: B must be > 0");
  return psi(ratios, gamma) * loss_bound;
}

double sigma_q(double rho, std::size_t k, double n) {
  if (!(rho > 0.0) || k < 1 || !(n >= 2.0)) fail(ErrorKind::kInvalidArgument, "sigma_q: need rho > 0, k >= 1, n >= 2");
  return rho / (std::sqrt(static_cast<double>(k)) + std::sqrt(2.0 * std::log(n)));
}

BoundBreakdown bound_breakdown(const BoundInputs& in) {
  in.validate();
  const double c = static_cast<double>(in.ratios.size());
  const double pi_c = *std::min_element(in.ratios.begin(), in.ratios.end());
  const double class_scale = c * pi_c;
  const double n = static_cast<double>(in.num_samples);
  const double k = static_cast<double>(in.num_params);
  const double bp = b_prime(in.ratios, in.gamma, in.loss_bound);
  const double root = std::sqrt(k) + std::sqrt(2.0 * std::log(n));
  const double pi = std::numbers::pi;

  BoundBreakdown out;
  out.bernstein = 40.0 * (in.loss_bound + in.lambda * bp) * std::log(4.0 / in.delta) / (3.0 * n * class_scale);
  out.term_I = 2.0 * in.objective / class_scale + out.bernstein;
  out.term_II = in.lambda * in.rho * in.rho * in.hessian_trace / (2.0 * root * root * class_scale);
  const double complexity =
      2.0 + 2.0 * bp + 2.0 * k * std::log(1.0 + in.weight_norm * in.weight_norm / (k * in.rho * in.rho)) +
      4.0 * k * std::log(root) +
      4.0 * std::log(2.0 * pi * pi * std::sqrt(n) * (n * bp + 1.0) * (n * bp + 1.0) / (3.0 * in.delta));
  out.term_III = in.lambda * complexity / (n * class_scale);
  out.total = out.term_I - out.term_II + out.term_III;
  if (!std::isfinite(out.total)) fail(ErrorKind::kNumeric, "bound: non-finite result");
  return out;
}

}  // namespace sharplab
