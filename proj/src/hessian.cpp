#include "sharplab/hessian.hpp"

#include <cmath>
#include <random>

#include "sharplab/error.hpp"

namespace sharplab {

namespace {

double norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::mt19937_64 probe_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

}  // namespace

double default_hvp_step(const ParameterSet& params) { return 1e-3 * (1.0 + l2_norm(params)); }

ParameterSet hvp(const ClassObjective& objective, const ParameterSet& params, std::span<const double> weights,
                 const ParameterSet& v, double h) {
  if (!(h > 0.0)) fail(ErrorKind::kInvalidArgument, "hvp: step must be positive");
  const double vn = l2_norm(v);
  if (!(vn > 0.0)) fail(ErrorKind::kInvalidArgument, "hvp: direction must be nonzero");
  ParameterSet up = params;
  axpy(h / vn, v, up);
  ParameterSet down = params;
  axpy(-h / vn, v, down);
  const ParameterSet g_up = value_and_gradient(objective, up, weights).gradient;
  const ParameterSet g_down = value_and_gradient(objective, down, weights).gradient;
  if (!g_up.all_finite() || !g_down.all_finite()) fail(ErrorKind::kNumeric, "hvp: non-finite gradient");
  ParameterSet out = g_up;
  axpy(-1.0, g_down, out);
  return scaled(out, vn / (2.0 * h));
}

HvpFn make_hvp(const ClassObjective& objective, const ParameterSet& params, std::vector<double> weights, double h) {
  return [&objective, params, weights = std::move(weights), h](std::span<const double> v) {
    return hvp(objective, params, weights, params.unflatten(v), h).flatten();
  };
}

TraceEstimate hutchinson_trace(const HvpFn& hvp_fn, std::size_t k_params, std::size_t probes, ProbeKind kind,
                               std::uint64_t seed) {
  if (probes == 0) fail(ErrorKind::kInvalidArgument, "hutchinson_trace: need at least one probe");
  std::vector<double> samples(probes);
  for (std::size_t p = 0; p < probes; ++p) {
    auto rng = probe_stream(seed, p);
    std::vector<double> z;
    if (kind == ProbeKind::kRademacher) {
      std::bernoulli_distribution coin(0.5);
      z.resize(k_params);
      for (double& x : z) x = coin(rng) ? 1.0 : -1.0;
    } else {
      z = gaussian_vector(k_params, rng);
    }
    const auto hz = hvp_fn(z);
    if (hz.size() != k_params) fail(ErrorKind::kShape, "hutchinson_trace: operator changed the dimension");
    samples[p] = dot(z, hz);
  }
  TraceEstimate est;
  est.probes = probes;
  double acc = 0.0;
  for (double s : samples) acc += s;
  est.trace = acc / static_cast<double>(probes);
  if (probes > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - est.trace) * (s - est.trace);
    est.std_error = std::sqrt(ss / static_cast<double>(probes - 1) / static_cast<double>(probes));
  }
  return est;
}

EigenEstimate top_eigenvalue(const HvpFn& hvp_fn, std::size_t k_params, std::size_t iterations, double tol,
                             std::uint64_t seed) {
  if (iterations == 0) fail(ErrorKind::kInvalidArgument, "top_eigenvalue: need at least one iteration");
  auto rng = probe_stream(seed, 0);
  std::vector<double> v = gaussian_vector(k_params, rng);
  double vn = norm(v);
  if (!(vn > 0.0)) fail(ErrorKind::kNumeric, "top_eigenvalue: zero starting iterate");
  for (double& x : v) x /= vn;

  EigenEstimate est;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> w = hvp_fn(v);
    if (w.size() != k_params) fail(ErrorKind::kShape, "top_eigenvalue: operator changed the dimension");
    est.value = dot(v, w);
    double rr = 0.0;
    for (std::size_t i = 0; i < k_params; ++i) {
      const double r = w[i] - est.value * v[i];
      rr += r * r;
    }
    est.residual = std::sqrt(rr);
    est.iterations = it + 1;
    const double wn = norm(w);
    if (!(wn > 0.0)) fail(ErrorKind::kNumeric, "top_eigenvalue: zero iterate (operator annihilated the vector)");
    if (est.residual <= tol * std::abs(est.value)) break;
    for (std::size_t i = 0; i < k_params; ++i) v[i] = w[i] / wn;
  }
  return est;
}

const char* to_string(ClassGroup g) {
  switch (g) {
    case ClassGroup::kAll: return "all";
    case ClassGroup::kHead: return "head";
    case ClassGroup::kMedium: return "medium";
    case ClassGroup::kTail: return "tail";
  }
  return "?";
}

HessianStats hessian_stats(const ClassObjective& objective, const ParameterSet& params,
                           std::span<const double> weights, ClassGroup group, const HessianOptions& options) {
  const double h = options.fd_step > 0.0 ? options.fd_step : default_hvp_step(params);
  HvpFn op = make_hvp(objective, params, std::vector<double>(weights.begin(), weights.end()), h);
  const std::size_t k = params.num_scalars();
  HessianStats stats;
  stats.class_group = group;
  const TraceEstimate trace = hutchinson_trace(op, k, options.probes, options.probe_kind, options.seed);
  stats.trace_estimate = trace.trace;
  stats.trace_probe_count = trace.probes;
  stats.trace_std_error = trace.std_error;
  if (options.power_iterations > 0) {
    const EigenEstimate eig = top_eigenvalue(op, k, options.power_iterations, options.power_tol, options.seed + 1);
    stats.top_eigenvalue = eig.value;
    stats.power_iterations = eig.iterations;
    stats.power_residual = eig.residual;
  }
  return stats;
}

std::vector<ClassSharpness> class_sharpness(const ClassObjective& objective, const ParameterSet& params, double rho,
                                            SharpnessMode mode, std::span<const double> shared_weights) {
  if (!(rho >= 0.0)) fail(ErrorKind::kInvalidArgument, "class_sharpness: rho must be >= 0");
  const std::size_t c = objective.num_classes();
  const auto presence = objective.class_presence();
  ParameterSet shared_shift;
  if (mode == SharpnessMode::kSharedWeighted) {
    if (shared_weights.size() != c) fail(ErrorKind::kInvalidArgument, "class_sharpness: one weight per class");
    ParameterSet eps = [&] {
      // One backward pass: direction of the weighted objective.
      ValueAndGradient vg = value_and_gradient(objective, params, shared_weights);
      const double gn = l2_norm(vg.gradient);
      return gn < 1e-12 ? params.zeros_like() : scaled(vg.gradient, rho / gn);
    }();
    shared_shift = plus(params, eps);
  }

  std::vector<ClassSharpness> out;
  out.reserve(c);
  for (std::size_t i = 0; i < c; ++i) {
    ClassSharpness s{i, 0.0, mode, presence[i] == 0};
    if (s.absent) {
      out.push_back(s);
      continue;
    }
    const auto only_i = indicator(c, std::span<const std::size_t>(&i, 1));
    const double base = evaluate(objective, params, only_i);
    if (mode == SharpnessMode::kSharedWeighted) {
      s.value = evaluate(objective, shared_shift, only_i) - base;
    } else {
      ValueAndGradient vg = value_and_gradient(objective, params, only_i);
      const double gn = l2_norm(vg.gradient);
      ParameterSet shifted = params;
      if (gn >= 1e-12) axpy(rho / gn, vg.gradient, shifted);
      s.value = evaluate(objective, shifted, only_i) - base;
    }
    if (!std::isfinite(s.value)) fail(ErrorKind::kNumeric, "class_sharpness: non-finite value for class " +
                                                               std::to_string(i));
    out.push_back(s);
  }
  return out;
}

LossSlice2D loss_slice_2d(const ClassObjective& objective, const ParameterSet& params,
                          std::span<const double> weights, double half_width, std::size_t steps, std::uint64_t seed) {
  if (steps == 0 || steps % 2 == 0) fail(ErrorKind::kInvalidArgument, "loss_slice_2d: steps must be odd");
  if (!(half_width >= 0.0)) fail(ErrorKind::kInvalidArgument, "loss_slice_2d: half width must be >= 0");
  const std::size_t k = params.num_scalars();
  auto rng = probe_stream(seed, 0);
  std::vector<double> dx = gaussian_vector(k, rng);
  std::vector<double> dy = gaussian_vector(k, rng);
  const double nx = norm(dx);
  for (double& v : dx) v /= nx;
  // Gram-Schmidt twice for orthogonality at rounding level.
  for (int pass = 0; pass < 2; ++pass) {
    const double proj = dot(dx, dy);
    for (std::size_t i = 0; i < k; ++i) dy[i] -= proj * dx[i];
  }
  const double ny = norm(dy);
  if (!(ny > 0.0)) fail(ErrorKind::kNumeric, "loss_slice_2d: degenerate directions");
  for (double& v : dy) v /= ny;

  LossSlice2D slice;
  slice.direction_x = params.unflatten(dx);
  slice.direction_y = params.unflatten(dy);
  slice.half_width = half_width;
  slice.steps = steps;
  slice.coords.resize(steps);
  const double mid = static_cast<double>(steps - 1) / 2.0;
  for (std::size_t i = 0; i < steps; ++i) {
    slice.coords[i] = steps == 1 ? 0.0 : half_width * (static_cast<double>(i) - mid) / mid;
  }
  slice.values.resize(steps * steps);
  const std::vector<double> w0 = params.flatten();
  ParameterSet probe = params;
  std::vector<double> w(k);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < steps; ++j) {
      for (std::size_t p = 0; p < k; ++p) w[p] = w0[p] + slice.coords[i] * dx[p] + slice.coords[j] * dy[p];
      probe.assign(w);
      slice.values[i * steps + j] = evaluate(objective, probe, weights);
    }
  }
  return slice;
}

}  // namespace sharplab
