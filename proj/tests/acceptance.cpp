#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sharplab/bound.hpp"
#include "sharplab/error.hpp"
#include "sharplab/harness.hpp"
#include "sharplab/hessian.hpp"
#include "sharplab/optimizers.hpp"
#include "support.hpp"

using namespace sharplab;
using testing::QuadraticObjective;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Verdict()> check;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

LossSpec random_loss(std::mt19937_64& rng) {
  LossSpec spec;
  spec.kind = static_cast<LossKind>(rng() % 4);
  if (rng() % 2 == 0) spec.drw = DrwSchedule{.start_epoch = 0, .beta = 0.999};
  return spec;
}

std::unique_ptr<testing::Instance> random_problem(std::mt19937_64& rng, std::uint64_t seed, std::vector<int> labels = {}) {
  const std::size_t classes = 2 + rng() % 5;
  const std::size_t batch = 4 + rng() % 20;
  return testing::random_instance(seed, random_loss(rng), classes, batch, std::move(labels));
}

SgdOptions random_sgd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return SgdOptions{.learning_rate = 0.01 + 0.2 * u(rng), .momentum = 0.9 * u(rng), .weight_decay = 1e-3 * u(rng)};
}

// Two consecutive steps so the momentum buffer participates in the comparison.
template <typename StepA, typename StepB>
double update_gap(const testing::Instance& inst, const SgdOptions& sgd, StepA a, StepB b) {
  auto pa = inst.params;
  auto pb = inst.params;
  OptimizerState sa(sgd), sb(sgd);
  double gap = 0.0;
  for (int s = 0; s < 2; ++s) {
    a(pa, sa);
    b(pb, sb);
    gap = std::max(gap, max_abs_diff(pa, pb));
  }
  return gap;
}

Verdict sam_equivalence() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    auto inst = random_problem(rng, 1000 + t);
    const double rho = t % 2 == 0 ? 0.05 : 0.5;
    SharpnessConfig cfg{.variant = Variant::kFocalSAM, .rho = rho, .lambda = 1.0, .gamma = 0.0};
    const auto ratios = inst->priors.ratios();
    worst = std::max(worst, update_gap(
                                *inst, random_sgd(rng),
                                [&](ParameterSet& p, OptimizerState& s) { focal_sam_step(*inst->objective, p, cfg, ratios, s); },
                                [&](ParameterSet& p, OptimizerState& s) { sam_step(*inst->objective, p, rho, s); }));
  }
  return {worst <= 1e-10, "max |diff| = " + fmt("%.3e", worst) + " over 20 instances"};
}

Verdict imbsam_equivalence() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  std::size_t empty_head = 0, empty_tail = 0;
  for (int t = 0; t < 20; ++t) {
    auto inst = random_problem(rng, 2000 + t);
    const std::size_t c = inst->model.num_classes;
    std::vector<std::size_t> tail;
    if (t % 5 == 0) {
      ++empty_tail;
    } else if (t % 5 == 1) {
      for (std::size_t i = 0; i < c; ++i) tail.push_back(i);
      ++empty_head;
    } else {
      for (std::size_t i = 0; i < c; ++i) {
        if (rng() % 2 == 0) tail.push_back(i);
      }
    }
    const double rho = t % 2 == 0 ? 0.05 : 0.5;
    SharpnessConfig cfg{.variant = Variant::kWeightedCustom, .rho = rho, .lambda = 1.0, .gamma = 0.0};
    cfg.explicit_weights = indicator(c, tail);
    const auto ratios = inst->priors.ratios();
    worst = std::max(worst, update_gap(
                                *inst, random_sgd(rng),
                                [&](ParameterSet& p, OptimizerState& s) { focal_sam_step(*inst->objective, p, cfg, ratios, s); },
                                [&](ParameterSet& p, OptimizerState& s) { imbsam_step(*inst->objective, p, tail, rho, s); }));
  }
  return {worst <= 1e-10, "max |diff| = " + fmt("%.3e", worst) + " over 20 instances (" + std::to_string(empty_head) +
                              " empty-head, " + std::to_string(empty_tail) + " empty-tail)"};
}

Verdict gradient_oracle() {
  double worst = 0.0;
  std::size_t points = 0;
  const double h = 1e-6;
  for (int kind = 0; kind < 4; ++kind) {
    for (bool drw : {false, true}) {
      LossSpec spec{.kind = static_cast<LossKind>(kind)};
      if (drw) spec.drw = DrwSchedule{.start_epoch = 0, .beta = 0.999};
      for (int p = 0; p < 100; ++p) {
        const std::uint64_t seed = 30'000 + 1000 * kind + 100 * drw + p;
        auto inst = testing::random_instance(seed, spec, 4, 12);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.1, 2.0);
        std::vector<double> weights(4);
        for (double& w : weights) w = u(rng);
        const auto analytic = value_and_gradient(*inst->objective, inst->params, weights).gradient.flatten();
        const auto base = inst->params.flatten();
        auto probe = inst->params;
        double diff2 = 0.0, norm2 = 0.0;
        for (std::size_t j = 0; j < base.size(); ++j) {
          auto shifted = base;
          shifted[j] = base[j] + h;
          probe.assign(shifted);
          const double up = evaluate(*inst->objective, probe, weights);
          shifted[j] = base[j] - h;
          probe.assign(shifted);
          const double down = evaluate(*inst->objective, probe, weights);
          const double fd = (up - down) / (2.0 * h);
          diff2 += (fd - analytic[j]) * (fd - analytic[j]);
          norm2 += std::max(fd * fd, analytic[j] * analytic[j]);
        }
        worst = std::max(worst, std::sqrt(diff2 / std::max(norm2, 1e-300)));
        ++points;
      }
    }
  }
  return {worst <= 1e-5, "max rel err = " + fmt("%.3e", worst) + " over " + std::to_string(points) +
                             " points (4 losses x DRW on/off x 100)"};
}

Verdict perturbation_norm() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> log_rho(std::log(1e-3), std::log(10.0));
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  std::size_t cases = 0;
  for (int t = 0; t < 1000; ++t) {
    const double rho = std::exp(log_rho(rng));
    Perturbation p;
    if (t % 2 == 0) {
      auto inst = random_problem(rng, 4000 + t);
      std::vector<double> w(inst->model.num_classes);
      for (double& x : w) x = std::abs(n(rng)) + 0.05;
      p = compute_perturbation(*inst->objective, inst->params, w, rho);
    } else {
      const std::size_t dim = 1 + rng() % 30;
      std::vector<double> a(dim), w(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        a[j] = std::abs(n(rng)) + 0.1;
        w[j] = std::pow(10.0, -4.0 + 8.0 * (rng() % 1000) / 1000.0) * n(rng);
      }
      p = compute_perturbation(QuadraticObjective({a}), QuadraticObjective::params(w), ones(1), rho);
    }
    if (p.gradient_norm < kZeroGradientNorm) continue;
    worst = std::max(worst, std::abs(l2_norm(p.epsilon) - rho));
    ++cases;
  }
  bool zero_ok = true;
  for (double scale : {0.0, 1e-20, 1e-14, 5e-13}) {
    const auto p = compute_perturbation(QuadraticObjective({{1.0, 1.0}}), QuadraticObjective::params({scale, -scale}),
                                        ones(1), 0.5);
    zero_ok = zero_ok && p.gradient_norm < kZeroGradientNorm && l2_norm(p.epsilon) == 0.0;
  }
  return {cases == 1000 && worst <= 1e-8 && zero_ok,
          "max | ||eps|| - rho | = " + fmt("%.3e", worst) + " over " + std::to_string(cases) +
              " cases; zero-gradient guard " + (zero_ok ? "ok" : "FAILED")};
}

nlohmann::json small_run(const std::string& variant, std::size_t epochs) {
  return {{"name", "accept"},
          {"dataset",
           {{"source", "synthetic"},
            {"num_classes", 6},
            {"input_dim", 5},
            {"n_max", 60},
            {"imbalance_ratio", 20.0},
            {"test_per_class", 10},
            {"seed", 5}}},
          {"partition", {{"t_head", 30}, {"t_tail", 8}}},
          {"model", {{"hidden_dims", {8}}}},
          {"loss", {{"kind", "LA"}}},
          {"optimizer",
           {{"variant", variant},
            {"lr", 0.05},
            {"momentum", 0.9},
            {"epochs", epochs},
            {"batch_size", 8},
            {"rho", 0.1},
            {"lambda", 0.8},
            {"gamma", 1.0}}},
          {"seeds", {0, 1}},
          {"data_seed", 2}};
}

Verdict backward_counts() {
  std::string detail;
  bool ok = true;
  for (const std::string variant : {"sgd", "sam", "imbsam", "focalsam", "ccsam"}) {
    std::size_t steps = 0, mismatches = 0;
    RunOptions opt{.quiet = true, .write_outputs = false};
    opt.on_step = [&](const StepEvent& e) {
      std::uint64_t expected = 0;
      if (variant == "sgd") expected = 1;
      if (variant == "sam") expected = 2;
      if (variant == "imbsam" || variant == "focalsam") expected = 3;
      if (variant == "ccsam") expected = 2 * e.classes_present;
      if (e.backward_passes != expected) ++mismatches;
      ++steps;
    };
    const auto result = run_experiment(parse_config(small_run(variant, 3)), opt);
    std::size_t batches = 0;
    for (const auto& r : result.records) batches += r.batches;
    ok = ok && mismatches == 0 && steps > 0 && steps == batches;
    detail += variant + " " + std::to_string(steps - mismatches) + "/" + std::to_string(steps) + "; ";
  }
  return {ok, "batches matching expected count: " + detail.substr(0, detail.size() - 2)};
}

HvpFn dense(std::vector<double> m, std::size_t n) {
  return [m = std::move(m), n](std::span<const double> v) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i] += m[i * n + j] * v[j];
    }
    return out;
  };
}

Verdict hutchinson_oracle() {
  bool diag_ok = true;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const std::size_t dim = 1 + rng() % 40;
    std::vector<double> m(dim * dim, 0.0);
    double exact = 0.0;
    for (std::size_t i = 0; i < dim; ++i) exact += (m[i * dim + i] = n(rng));
    const double est = hutchinson_trace(dense(m, dim), dim, 1, ProbeKind::kRademacher, 60 + t).trace;
    diag_ok = diag_ok && std::abs(est - exact) <= 1e-12 * std::max(1.0, std::abs(exact));
  }

  const std::size_t dim = 50;
  std::vector<double> b(dim * dim), a(dim * dim, 0.0);
  for (double& x : b) x = n(rng);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = i == j ? 1.0 : 0.0;
      for (std::size_t k = 0; k < dim; ++k) acc += b[i * dim + k] * b[j * dim + k] / dim;
      a[i * dim + j] = acc;
    }
  }
  double exact = 0.0;
  for (std::size_t i = 0; i < dim; ++i) exact += a[i * dim + i];
  const double est = hutchinson_trace(dense(a, dim), dim, 1000, ProbeKind::kGaussian, 7).trace;
  const double rel = std::abs(est - exact) / std::abs(exact);

  std::vector<double> d(100, 0.0);
  for (std::size_t i = 0; i < 10; ++i) d[i * 10 + i] = static_cast<double>(i + 1);
  const double top = top_eigenvalue(dense(d, 10), 10, 5000, 1e-14, 9).value;
  const double top_err = std::abs(top - 10.0);

  return {diag_ok && rel <= 0.02 && top_err <= 1e-6,
          std::string("diagonal single-probe ") + (diag_ok ? "exact" : "INEXACT") + "; 50x50 Gaussian x1000 rel err " +
              fmt("%.4f", rel) + "; lambda_max err " + fmt("%.2e", top_err)};
}

// Written from the theorem statement with long double intermediates.
long double oracle_total(const BoundInputs& in) {
  using ld = long double;
  const ld c = in.ratios.size();
  ld pi_c = 1.0L, psi_v = 0.0L;
  for (double r : in.ratios) {
    pi_c = std::min<ld>(pi_c, r);
    psi_v += std::pow(1.0L - static_cast<ld>(r), static_cast<ld>(in.gamma)) * r;
  }
  const ld big_b = in.loss_bound;
  const ld bp = psi_v * big_b;
  const ld n = in.num_samples, k = in.num_params, lam = in.lambda, rho = in.rho, delta = in.delta;
  const ld sigma = rho / (std::sqrt(k) + std::sqrt(2.0L * std::log(n)));
  const ld cpc = c * pi_c;
  const ld one = 2.0L * in.objective / cpc + 40.0L * (big_b + lam * bp) * std::log(4.0L / delta) / (3.0L * n * cpc);
  const ld two = lam * sigma * sigma * in.hessian_trace / (2.0L * cpc);
  const ld w2 = static_cast<ld>(in.weight_norm) * in.weight_norm;
  const ld pi = std::numbers::pi_v<long double>;
  const ld inner = 2.0L + 2.0L * bp + 2.0L * k * std::log1p(w2 / (k * rho * rho)) +
                   2.0L * k * std::log((std::sqrt(k) + std::sqrt(2.0L * std::log(n))) *
                                       (std::sqrt(k) + std::sqrt(2.0L * std::log(n)))) +
                   4.0L * std::log(2.0L * pi * pi * std::sqrt(n) * (n * bp + 1.0L) * (n * bp + 1.0L) / (3.0L * delta));
  const ld three = lam * inner / (n * cpc);
  return one - two + three;
}

Verdict bound_evaluator() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool psi_one = true, monotone = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = 2 + rng() % 99;
    std::vector<std::size_t> counts(c);
    for (auto& x : counts) x = 1 + rng() % 5000;
    const auto priors = ClassPriors::from_counts(counts);
    psi_one = psi_one && psi(priors.ratios(), 0.0) == 1.0;
    double prev = psi(priors.ratios(), 0.0);
    for (int g = 1; g <= 10; ++g) {
      const double cur = psi(priors.ratios(), 0.5 * g);
      monotone = monotone && cur < prev;
      prev = cur;
    }
  }
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    BoundInputs in;
    const std::size_t c = 2 + rng() % 20;
    in.ratios.resize(c);
    double total = 0.0;
    for (double& r : in.ratios) total += (r = 0.01 + u(rng));
    for (double& r : in.ratios) r /= total;
    in.gamma = 3.0 * u(rng);
    in.lambda = 2.0 * u(rng);
    in.rho = 0.01 + u(rng);
    in.loss_bound = 0.5 + 10.0 * u(rng);
    in.num_params = 1 + rng() % 100000;
    in.num_samples = 10 + rng() % 1'000'000;
    in.delta = 0.001 + 0.2 * u(rng);
    in.weight_norm = 50.0 * u(rng);
    in.objective = 3.0 * u(rng);
    in.hessian_trace = 1000.0 * u(rng);
    const double got = bound_breakdown(in).total;
    const long double want = oracle_total(in);
    worst = std::max(worst, static_cast<double>(std::abs(got - want) / std::max(1.0L, std::abs(want))));
  }
  return {psi_one && monotone && worst <= 1e-10,
          std::string("Psi(0)=1 ") + (psi_one ? "exact" : "NOT exact") + " on 200 priors; strictly decreasing " +
              (monotone ? "yes" : "NO") + "; max rel diff vs oracle " + fmt("%.2e", worst) + " over 50 sets"};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct FinalStats {
  std::vector<double> bal_acc, trace_head, trace_tail;
};

FinalStats final_stats(const ExperimentResult& r) {
  FinalStats out;
  for (const auto& seed : r.seeds) {
    const MetricsRecord* last = nullptr;
    for (const auto& rec : r.records) {
      if (rec.seed == seed.seed) last = &rec;
    }
    if (last == nullptr || last->status != "ok") continue;
    out.bal_acc.push_back(last->bal_acc.value_or(NAN));
    out.trace_head.push_back(last->trace_head.value_or(NAN));
    out.trace_tail.push_back(last->trace_tail.value_or(NAN));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? NAN : acc / v.size();
}

Verdict desk_trend() {
  const auto base = load_config(std::string(SHARPLAB_SOURCE_DIR) + "/configs/desk_trend.json");
  auto run = [&](Variant v) {
    auto cfg = base;
    cfg.train.sharpness.variant = v;
    return final_stats(run_experiment(cfg, RunOptions{.quiet = true, .write_outputs = false}));
  };
  auto sgd_f = std::async(std::launch::async, run, Variant::kSGD);
  auto imb_f = std::async(std::launch::async, run, Variant::kImbSAM);
  auto fs_f = std::async(std::launch::async, run, Variant::kFocalSAM);
  const auto sgd = sgd_f.get(), imb = imb_f.get(), fs = fs_f.get();
  const std::size_t seeds = base.seeds.size();
  if (sgd.bal_acc.size() != seeds || imb.bal_acc.size() != seeds || fs.bal_acc.size() != seeds) {
    return {false, "a seed diverged"};
  }
  const bool a = mean(fs.bal_acc) >= mean(sgd.bal_acc);
  const bool b = median(fs.trace_tail) <= 0.8 * median(sgd.trace_tail);
  const bool c = mean(fs.trace_head) <= mean(imb.trace_head);
  return {a && b && c, std::string("(a) bal_acc FS ") + fmt("%.4f", mean(fs.bal_acc)) + " vs SGD " +
                           fmt("%.4f", mean(sgd.bal_acc)) + (a ? " ok" : " FAIL") + "; (b) median tail trace FS " +
                           fmt("%.3f", median(fs.trace_tail)) + " vs 0.8*SGD " +
                           fmt("%.3f", 0.8 * median(sgd.trace_tail)) + (b ? " ok" : " FAIL") +
                           "; (c) head trace FS " + fmt("%.3f", mean(fs.trace_head)) + " vs ImbSAM " +
                           fmt("%.3f", mean(imb.trace_head)) + (c ? " ok" : " FAIL")};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto root = std::filesystem::temp_directory_path() / "sharplab_acceptance_determinism";
  std::filesystem::remove_all(root);
  bool ok = true;
  std::string detail;
  for (const std::string variant : {"focalsam", "ccsam"}) {
    auto j = small_run(variant, 4);
    j["diagnostics"] = {{"hessian_every", 2}, {"hessian_probes", 4}, {"sharpness_every", 2}, {"bound_every", 2}};
    std::string bytes[2];
    for (int r = 0; r < 2; ++r) {
      const auto dir = (root / (variant + std::to_string(r))).string();
      auto cfg = parse_config(j);
      cfg.output_dir = dir;
      emit(run_experiment(cfg, RunOptions{.quiet = true, .write_outputs = false}), dir);
      bytes[r] = slurp(dir + "/metrics.csv");
    }
    ok = ok && !bytes[0].empty() && bytes[0] == bytes[1];
    detail += variant + " " + std::to_string(bytes[0].size()) + " bytes " + (bytes[0] == bytes[1] ? "identical" : "DIFFER") + "; ";
  }
  std::filesystem::remove_all(root);
  return {ok, detail.substr(0, detail.size() - 2)};
}

Verdict rho_scheduler() {
  bool ok = true;
  std::size_t checked = 0;
  for (const std::string variant : {"sam", "focalsam", "ccsam"}) {
    auto j = small_run(variant, 10);
    j["optimizer"]["rho"] = 0.2;
    j["optimizer"]["rho_schedule"] = {{"milestone_epoch", 8}, {"multiplier", 2.0}};
    const auto r = run_experiment(parse_config(j), RunOptions{.quiet = true, .write_outputs = false});
    for (const auto& rec : r.records) {
      const double expected = rec.epoch <= 8 ? 0.2 : 0.2 * 2.0;
      ok = ok && rec.rho == expected;
      ++checked;
    }
  }
  return {ok && checked == 3 * 2 * 10,
          std::to_string(checked) + " epoch records checked (base 0.2 through epoch 8, 0.4 from epoch 9)"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "SAM equivalence", 10, sam_equivalence},
      {2, "ImbSAM equivalence", 10, imbsam_equivalence},
      {3, "gradient oracle", 60, gradient_oracle},
      {4, "perturbation norm law", 10, perturbation_norm},
      {5, "backward-pass counts", 30, backward_counts},
      {6, "Hutchinson oracle", 30, hutchinson_oracle},
      {7, "bound evaluator", 10, bound_evaluator},
      {8, "desk-scale trend", 900, desk_trend},
      {9, "determinism", 120, determinism},
      {10, "rho scheduler", 60, rho_scheduler},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = v.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.1fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                v.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
