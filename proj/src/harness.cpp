#include "sharplab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "sharplab/bound.hpp"
#include "sharplab/error.hpp"

namespace sharplab {

namespace {

using nlohmann::json;

struct GroupSpec {
  ClassGroup group;
  std::vector<std::size_t> members;
};

std::vector<GroupSpec> class_groups(const ClassPartition& partition, std::size_t num_classes) {
  std::vector<std::size_t> all(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) all[i] = i;
  return {{ClassGroup::kAll, all},
          {ClassGroup::kHead, partition.head},
          {ClassGroup::kMedium, partition.medium},
          {ClassGroup::kTail, partition.tail}};
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double learning_rate_at(const TrainConfig& train, std::size_t epoch) {
  const double lr = train.sgd.learning_rate;
  if (train.lr_schedule == LrSchedule::kConstant) return lr;
  const double t = static_cast<double>(epoch) / static_cast<double>(train.epochs);
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * t));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory '" + dir + "': " + ec.message());
}

bool due(std::size_t every, std::size_t epoch) { return every > 0 && (epoch + 1) % every == 0; }

std::optional<double> group_mean(const std::vector<ClassSharpness>& values, std::span<const std::size_t> members) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t c : members) {
    if (values[c].absent) continue;
    acc += values[c].value;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

/// Full-training-split views shared by the epoch diagnostics and `diagnose`.
class Probe {
 public:
  Probe(const ExperimentConfig& config, const ModelSpec& model, const PreparedData& data, std::size_t epoch)
      : config_(config),
        data_(data),
        training_(model, config.loss, data.priors, epoch, data.train.features, data.train.labels),
        plain_(model, plain_loss_, data.priors, epoch, data.train.features, data.train.labels) {}

  const ClassObjective& hessian_objective() const {
    return config_.diagnostics.hessian_training_loss ? static_cast<const ClassObjective&>(training_) : plain_;
  }
  const ClassObjective& training() const { return training_; }

  std::vector<HessianStats> hessian(const ParameterSet& params) const {
    std::vector<HessianStats> out;
    const std::size_t c = data_.priors.num_classes();
    for (const auto& g : class_groups(data_.partition, c)) {
      if (g.members.empty()) continue;
      const auto w = indicator(c, g.members);
      out.push_back(hessian_stats(hessian_objective(), params, w, g.group, config_.diagnostics.hessian));
    }
    return out;
  }

  std::vector<ClassSharpness> sharpness(const ParameterSet& params, double rho) const {
    return class_sharpness(training_, params, rho, SharpnessMode::kOwnGradient, {});
  }

  std::optional<BoundBreakdown> bound(const ParameterSet& params, double rho) const {
    const auto& cfg = config_.train.sharpness;
    if (!(rho > 0.0) || data_.train.size() < 2) return std::nullopt;
    const auto focal = focal_weights(data_.priors, cfg.gamma).values;
    const auto ones_w = ones(data_.priors.num_classes());
    const Perturbation eps = compute_perturbation(training_, params, focal, rho);
    const double base = evaluate(training_, params, ones_w);
    const double focal_here = evaluate(training_, params, focal);
    const double focal_there = evaluate(training_, plus(params, eps.epsilon), focal);
    const double h = config_.diagnostics.hessian.fd_step > 0.0 ? config_.diagnostics.hessian.fd_step
                                                                : default_hvp_step(params);
    const auto trace = hutchinson_trace(make_hvp(training_, params, focal, h), params.num_scalars(),
                                        config_.diagnostics.hessian.probes, config_.diagnostics.hessian.probe_kind,
                                        config_.diagnostics.hessian.seed);
    BoundInputs in;
    in.ratios = data_.priors.ratios();
    in.gamma = cfg.gamma;
    in.lambda = cfg.lambda;
    in.rho = rho;
    in.loss_bound = config_.diagnostics.bound_loss_bound;
    in.num_params = params.num_scalars();
    in.num_samples = data_.train.size();
    in.delta = config_.diagnostics.bound_delta;
    in.weight_norm = l2_norm(params);
    in.objective = base + cfg.lambda * (focal_there - focal_here);
    in.hessian_trace = trace.trace;
    return bound_breakdown(in);
  }

  LossSlice2D slice(const ParameterSet& params, std::uint64_t seed) const {
    return loss_slice_2d(training_, params, ones(data_.priors.num_classes()), config_.diagnostics.slice_half_width,
                         config_.diagnostics.slice_steps, seed);
  }

 private:
  const ExperimentConfig& config_;
  const PreparedData& data_;
  LossSpec plain_loss_;
  BatchObjective training_;
  BatchObjective plain_;
};

void store_hessian(MetricsRecord& rec, const std::vector<HessianStats>& stats) {
  for (const auto& s : stats) {
    rec.hessian_probes = s.trace_probe_count;
    switch (s.class_group) {
      case ClassGroup::kAll: rec.trace_all = s.trace_estimate; rec.lambda_max_all = s.top_eigenvalue; break;
      case ClassGroup::kHead: rec.trace_head = s.trace_estimate; rec.lambda_max_head = s.top_eigenvalue; break;
      case ClassGroup::kMedium: rec.trace_medium = s.trace_estimate; rec.lambda_max_medium = s.top_eigenvalue; break;
      case ClassGroup::kTail: rec.trace_tail = s.trace_estimate; rec.lambda_max_tail = s.top_eigenvalue; break;
    }
  }
}

void write_slice_csv(const LossSlice2D& slice, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  out << "i,j,x,y,loss\n";
  char buf[128];
  for (std::size_t i = 0; i < slice.steps; ++i) {
    for (std::size_t j = 0; j < slice.steps; ++j) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", i, j, slice.coords[i], slice.coords[j],
                    slice.at(i, j));
      out << buf;
    }
  }
}

ModelSpec fitted_model(const ExperimentConfig& config, const PreparedData& data) {
  ModelSpec m = config.model;
  m.input_dim = data.train.input_dim();
  m.num_classes = data.priors.num_classes();
  m.validate();
  return m;
}

SharpnessConfig seed_sharpness(const ExperimentConfig& config, const PreparedData& data) {
  SharpnessConfig s = config.train.sharpness;
  if (s.variant == Variant::kImbSAM && !config.train.tail_set_given) s.tail_set = data.partition.tail;
  if (s.variant == Variant::kCCSAM && s.rho_per_class.empty()) {
    s.rho_per_class = ccsam_radii(data.priors, config.train.rho_head.value_or(s.rho),
                                  config.train.rho_tail.value_or(s.rho));
  }
  try {
    s.validate(data.priors.num_classes());
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("optimizer: ") + e.what());
  }
  return s;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stat_json(std::span<const double> values) {
  const Stat s = mean_std(values);
  return {{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}};
}

json build_summary(const ExperimentConfig& config, const ExperimentResult& result) {
  json seeds = json::array();
  std::vector<double> bal, head, medium, tail, trace_tail, per_epoch;
  for (const auto& outcome : result.seeds) {
    const MetricsRecord* last = nullptr;
    std::uint64_t passes = 0;
    std::size_t epochs = 0;
    for (const auto& r : result.records) {
      if (r.seed != outcome.seed) continue;
      last = &r;
      passes += r.backward_passes;
      ++epochs;
    }
    json entry{{"seed", outcome.seed}, {"status", outcome.status}};
    if (last) {
      entry["final"] = {{"epoch", last->epoch},
                        {"bal_acc", optional_json(last->bal_acc)},
                        {"acc_head", optional_json(last->acc_head)},
                        {"acc_medium", optional_json(last->acc_medium)},
                        {"acc_tail", optional_json(last->acc_tail)},
                        {"trace_tail", optional_json(last->trace_tail)},
                        {"backward_passes_per_epoch",
                         epochs ? static_cast<double>(passes) / static_cast<double>(epochs) : 0.0}};
      if (outcome.status == "ok") {
        if (last->bal_acc) bal.push_back(*last->bal_acc);
        if (last->acc_head) head.push_back(*last->acc_head);
        if (last->acc_medium) medium.push_back(*last->acc_medium);
        if (last->acc_tail) tail.push_back(*last->acc_tail);
        if (last->trace_tail) trace_tail.push_back(*last->trace_tail);
        if (epochs) per_epoch.push_back(static_cast<double>(passes) / static_cast<double>(epochs));
      }
    }
    seeds.push_back(entry);
  }
  return {{"version", kVersion},
          {"name", config.name},
          {"variant", to_string(config.train.sharpness.variant)},
          {"config", config.source},
          {"seeds", seeds},
          {"aggregate",
           {{"bal_acc", stat_json(bal)},
            {"acc_head", stat_json(head)},
            {"acc_medium", stat_json(medium)},
            {"acc_tail", stat_json(tail)},
            {"trace_tail", stat_json(trace_tail)},
            {"backward_passes_per_epoch", stat_json(per_epoch)}}}};
}

void log_line(const RunOptions& options, const MetricsRecord& r) {
  if (options.quiet || !options.log) return;
  char buf[256];
  std::snprintf(buf, sizeof buf, "seed %llu epoch %zu %s loss %.5f bal_acc %.4f passes %llu\n",
                static_cast<unsigned long long>(r.seed), r.epoch, r.status.c_str(), r.train_loss.value_or(NAN),
                r.bal_acc.value_or(NAN), static_cast<unsigned long long>(r.backward_passes));
  *options.log << buf;
}

SeedOutcome run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                     const RunOptions& options, std::vector<MetricsRecord>& records) {
  ModelSpec model = fitted_model(config, data);
  model.init_seed = seed;
  SharpnessConfig sharp = seed_sharpness(config, data);
  const std::vector<double> base_radii = sharp.rho_per_class;
  const auto& ratios = data.priors.ratios();
  const std::size_t c = data.priors.num_classes();
  const auto& diag = config.diagnostics;

  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.final_params = init_params(model);
  ParameterSet& params = outcome.final_params;
  OptimizerState state(config.train.sgd);

  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    MetricsRecord rec;
    rec.seed = seed;
    rec.epoch = epoch + 1;
    rec.learning_rate = learning_rate_at(config.train, epoch);
    rec.rho = rho_at(config.train.rho_schedule, epoch);
    state.set_learning_rate(rec.learning_rate);
    sharp.rho = rec.rho;
    if (!base_radii.empty() && config.train.rho_schedule.base > 0.0) {
      const double factor = rec.rho / config.train.rho_schedule.base;
      for (std::size_t i = 0; i < c; ++i) sharp.rho_per_class[i] = base_radii[i] * factor;
    }

    try {
      const auto batches = epoch_batches(data.train.size(), config.train.batch_size, config.data_seed, epoch);
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        auto [inputs, labels] = data.train.gather_rows(batches[b]);
        const double weight = static_cast<double>(labels.size());
        BatchObjective objective(model, config.loss, data.priors, epoch, std::move(inputs), std::move(labels));
        const double loss = evaluate(objective, params, ones(c));
        if (!std::isfinite(loss)) fail(ErrorKind::kNumeric, "training loss is not finite");
        loss_sum += loss * weight;
        const StepReport report = sharpness_step(objective, params, sharp, ratios, state);
        if (!params.all_finite()) fail(ErrorKind::kNumeric, "parameters became non-finite");
        rec.backward_passes += report.backward_passes;
        ++rec.batches;
        if (options.on_step) {
          const auto presence = objective.class_presence();
          const auto present =
              static_cast<std::size_t>(std::count_if(presence.begin(), presence.end(), [](std::size_t n) { return n > 0; }));
          options.on_step({seed, epoch + 1, b, report.backward_passes, present});
        }
      }
      rec.train_loss = loss_sum / static_cast<double>(data.train.size());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      rec.status = "diverged";
      outcome.status = "diverged";
      records.push_back(rec);
      log_line(options, rec);
      return outcome;
    }

    const auto predictions = argmax_rows(logits(params, model, data.test.features));
    const auto acc = balanced_accuracy(predictions, data.test.labels, data.partition, c);
    rec.bal_acc = acc.overall;
    rec.acc_head = acc.head;
    rec.acc_medium = acc.medium;
    rec.acc_tail = acc.tail;

    const bool last = epoch + 1 == config.train.epochs;
    const bool hessian_due = due(diag.hessian_every, epoch) || (last && diag.hessian_at_end);
    const bool sharp_due = due(diag.sharpness_every, epoch);
    const bool bound_due = due(diag.bound_every, epoch);
    const bool slice_due = last && diag.slice_at_end && options.write_outputs;
    if (hessian_due || sharp_due || bound_due || slice_due) {
      const Probe probe(config, model, data, epoch);
      if (hessian_due) store_hessian(rec, probe.hessian(params));
      if (sharp_due && rec.rho > 0.0) {
        const auto s = probe.sharpness(params, rec.rho);
        rec.sharp_head = group_mean(s, data.partition.head);
        rec.sharp_medium = group_mean(s, data.partition.medium);
        rec.sharp_tail = group_mean(s, data.partition.tail);
      }
      if (bound_due) {
        if (const auto bound = probe.bound(params, rec.rho)) {
          rec.bound_I = bound->term_I;
          rec.bound_II = bound->term_II;
          rec.bound_III = bound->term_III;
          rec.bound_total = bound->total;
        }
      }
      if (slice_due) {
        ensure_dir(config.output_dir);
        write_slice_csv(probe.slice(params, seed),
                        (std::filesystem::path(config.output_dir) / ("slice_seed" + std::to_string(seed) + ".csv"))
                            .string());
      }
    }
    records.push_back(rec);
    log_line(options, rec);
  }
  if (options.write_outputs) {
    ensure_dir(config.output_dir);
    save_checkpoint(params, model,
                    (std::filesystem::path(config.output_dir) / ("checkpoint_seed" + std::to_string(seed) + ".json"))
                        .string());
  }
  return outcome;
}

Dataset load_split(const DataConfig& d, const std::string& path, const std::string& labels) {
  CsvOptions csv;
  csv.label_column = d.label_column;
  return load_tabular(path, d.source == DataSource::kCsv ? TabularFormat::kCsv : TabularFormat::kIdx, csv, labels);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  const DataConfig& d = config.data;
  if (d.source == DataSource::kSynthetic) {
    auto splits = synth_gaussian_lt(d.synthetic);
    out.train = std::move(splits.train);
    out.test = std::move(splits.test);
  } else {
    Dataset train = load_split(d, d.path, d.label_path);
    if (!d.test_path.empty()) {
      out.test = load_split(d, d.test_path, d.test_label_path);
    } else {
      auto [rest, test] = split_balanced(train, d.test_per_class, d.seed);
      out.test = std::move(test);
      train = std::move(rest);
    }
    out.train = d.imbalance_ratio ? subsample_long_tailed(train, *d.imbalance_ratio, d.seed) : std::move(train);
    const std::size_t c = std::max(out.train.num_classes, out.test.num_classes);
    out.train.num_classes = c;
    out.test.num_classes = c;
    if (out.train.input_dim() != out.test.input_dim()) {
      fail(ErrorKind::kShape, "train and test splits have different feature counts");
    }
  }
  out.train.validate();
  out.test.validate();
  out.priors = out.train.priors();
  out.partition = partition_classes(out.priors, config.t_head, config.t_tail);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const PreparedData data = prepare_data(config);
  ExperimentResult result;
  for (std::uint64_t seed : config.seeds) {
    result.seeds.push_back(run_seed(config, data, seed, options, result.records));
  }
  result.summary = build_summary(config, result);
  if (options.write_outputs) emit(result, config.output_dir);
  return result;
}

void emit(const ExperimentResult& result, const std::string& dir) {
  ensure_dir(dir);
  const auto root = std::filesystem::path(dir);
  write_metrics_csv(result.records, (root / "metrics.csv").string());
  std::ofstream out(root / "summary.json");
  if (!out) fail(ErrorKind::kIo, "cannot write summary.json in '" + dir + "'");
  out << result.summary.dump(2) << "\n";
}

json diagnose(const ExperimentConfig& config, const ParameterSet& params, const std::string& out_dir) {
  const PreparedData data = prepare_data(config);
  const ModelSpec model = fitted_model(config, data);
  if (!init_params(model).same_layout(params)) {
    fail(ErrorKind::kShape, "checkpoint parameters do not match the configured model");
  }
  const std::size_t epoch = config.train.epochs - 1;
  const double rho = rho_at(config.train.rho_schedule, epoch);
  const Probe probe(config, model, data, epoch);
  const std::size_t c = data.priors.num_classes();

  json report{{"version", kVersion}, {"rho", rho}, {"num_params", params.num_scalars()}};
  json hess = json::object();
  for (const auto& s : probe.hessian(params)) {
    hess[to_string(s.class_group)] = {{"trace", s.trace_estimate},
                                      {"trace_std_error", s.trace_std_error},
                                      {"probes", s.trace_probe_count},
                                      {"lambda_max", s.top_eigenvalue},
                                      {"power_iterations", s.power_iterations},
                                      {"power_residual", s.power_residual}};
  }
  report["hessian"] = hess;

  if (rho > 0.0) {
    const auto own = probe.sharpness(params, rho);
    const auto focal = focal_weights(data.priors, config.train.sharpness.gamma).values;
    const auto shared = class_sharpness(probe.training(), params, rho, SharpnessMode::kSharedWeighted, focal);
    json classes = json::array();
    for (std::size_t i = 0; i < c; ++i) {
      classes.push_back({{"class", i},
                         {"count", data.priors.counts()[i]},
                         {"own_gradient", own[i].absent ? json(nullptr) : json(own[i].value)},
                         {"shared_focal", shared[i].absent ? json(nullptr) : json(shared[i].value)}});
    }
    report["class_sharpness"] = classes;
    report["group_sharpness"] = {{"head", optional_json(group_mean(own, data.partition.head))},
                                 {"medium", optional_json(group_mean(own, data.partition.medium))},
                                 {"tail", optional_json(group_mean(own, data.partition.tail))}};
    if (const auto b = probe.bound(params, rho)) {
      report["bound"] = {{"term_I", b->term_I},   {"bernstein", b->bernstein},
                         {"term_II", b->term_II}, {"term_III", b->term_III},
                         {"total", b->total},     {"remainder_omitted", b->remainder_omitted}};
    }
  }

  ensure_dir(out_dir);
  const auto root = std::filesystem::path(out_dir);
  write_slice_csv(probe.slice(params, config.diagnostics.hessian.seed), (root / "slice.csv").string());
  report["slice"] = "slice.csv";
  std::ofstream out(root / "diagnose.json");
  if (!out) fail(ErrorKind::kIo, "cannot write diagnose.json in '" + out_dir + "'");
  out << report.dump(2) << "\n";
  return report;
}

}  // namespace sharplab
