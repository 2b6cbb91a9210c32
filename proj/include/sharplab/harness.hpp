#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "sharplab/data.hpp"
#include "sharplab/hessian.hpp"
#include "sharplab/losses.hpp"
#include "sharplab/models.hpp"
#include "sharplab/optimizers.hpp"

namespace sharplab {

inline constexpr const char* kVersion = "sharplab 0.1.0";

enum class DataSource { kSynthetic, kCsv, kIdx };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  DatasetConfig synthetic;
  // Tabular sources.
  std::string path;
  std::string label_path;
  std::string test_path;
  std::string test_label_path;
  std::string label_column;
  std::optional<double> imbalance_ratio;
  std::size_t test_per_class = 50;
  std::uint64_t seed = 0;
};

enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
  SharpnessConfig sharpness;
  SgdOptions sgd;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  RhoSchedule rho_schedule;
  /// CC-SAM radii endpoints when rho_per_class is not given explicitly.
  std::optional<double> rho_head;
  std::optional<double> rho_tail;
  bool tail_set_given = false;
};

struct DiagnosticsConfig {
  std::size_t hessian_every = 0;
  bool hessian_at_end = false;
  HessianOptions hessian;
  /// true: group Hessians use the training loss; false: plain cross-entropy.
  bool hessian_training_loss = false;
  std::size_t sharpness_every = 0;
  bool slice_at_end = false;
  double slice_half_width = 1.0;
  std::size_t slice_steps = 11;
  std::size_t bound_every = 0;
  double bound_loss_bound = 10.0;
  double bound_delta = 0.05;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  std::size_t t_head = 100;
  std::size_t t_tail = 20;
  ModelSpec model;
  LossSpec loss;
  TrainConfig train;
  DiagnosticsConfig diagnostics;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t data_seed = 0;
  std::string output_dir = "runs";
  /// The JSON the config was parsed from, echoed into the summary.
  nlohmann::json source;
};

/// Strict parse: unknown keys and wrong types are rejected with the JSON path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

struct MetricsRecord {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string status = "ok";
  std::optional<double> train_loss;
  std::optional<double> bal_acc, acc_head, acc_medium, acc_tail;
  std::optional<double> sharp_head, sharp_medium, sharp_tail;
  std::uint64_t backward_passes = 0;
  std::size_t batches = 0;
  double rho = 0.0;
  double learning_rate = 0.0;
  std::optional<double> trace_all, trace_head, trace_medium, trace_tail;
  std::optional<double> lambda_max_all, lambda_max_head, lambda_max_medium, lambda_max_tail;
  std::size_t hessian_probes = 0;
  std::optional<double> bound_I, bound_II, bound_III, bound_total;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// CSV column order used by write_metrics_csv.
const std::vector<std::string>& metrics_columns();
std::string metrics_csv(std::span<const MetricsRecord> records);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);
void write_metrics_csv(std::span<const MetricsRecord> records, const std::string& path);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

struct StepEvent {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::uint64_t backward_passes = 0;
  std::size_t classes_present = 0;
};

struct RunOptions {
  bool quiet = true;
  bool write_outputs = true;
  std::function<void(const StepEvent&)> on_step;
  std::ostream* log = nullptr;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::string status = "ok";
  ParameterSet final_params;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<SeedOutcome> seeds;
  nlohmann::json summary;
};

/// Materialized train/test splits plus the class bookkeeping derived from them.
struct PreparedData {
  Dataset train;
  Dataset test;
  ClassPriors priors;
  ClassPartition partition;
};

PreparedData prepare_data(const ExperimentConfig& config);

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes metrics.csv and summary.json into `dir`.
void emit(const ExperimentResult& result, const std::string& dir);

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

Stat mean_std(std::span<const double> values);

struct VariantRow {
  std::string variant;
  Stat bal_acc, acc_head, acc_medium, acc_tail;
  Stat trace_tail;
  double backward_per_epoch = 0.0;
  /// Mean balanced accuracy minus the first variant's.
  double bal_acc_delta = 0.0;
  std::size_t rank = 0;
};

struct ComparisonTable {
  std::vector<VariantRow> rows;
};

/// Runs every config (all must share dataset, seeds and data order) and tabulates.
ComparisonTable compare_configs(std::span<const ExperimentConfig> configs, const RunOptions& options = {});
/// Runs `shared` once per variant name, overriding optimizer.variant.
ComparisonTable compare(std::span<const std::string> variants, const nlohmann::json& shared,
                        const RunOptions& options = {});
std::string format_comparison(const ComparisonTable& table);
void write_comparison_csv(const ComparisonTable& table, const std::string& path);

// Checkpoints: <stem>.json manifest + <stem>.bin little-endian float64 payload.
void save_checkpoint(const ParameterSet& params, const ModelSpec& spec, const std::string& manifest_path);
ParameterSet load_checkpoint(const std::string& manifest_path, ModelSpec* spec = nullptr);

/// Sharpness, Hessian, bound and slice diagnostics of `params` on the training split.
nlohmann::json diagnose(const ExperimentConfig& config, const ParameterSet& params, const std::string& out_dir);

}  // namespace sharplab
