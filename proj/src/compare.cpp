#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "sharplab/error.hpp"
#include "sharplab/harness.hpp"

namespace sharplab {

namespace {

bool paired(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto dataset = [](const ExperimentConfig& c) { return c.source.value("dataset", nlohmann::json::object()); };
  return dataset(a) == dataset(b) && a.seeds == b.seeds && a.data_seed == b.data_seed &&
         a.train.epochs == b.train.epochs && a.train.batch_size == b.train.batch_size && a.t_head == b.t_head &&
         a.t_tail == b.t_tail;
}

VariantRow tabulate(const ExperimentConfig& config, const ExperimentResult& result) {
  VariantRow row;
  row.variant = to_string(config.train.sharpness.variant);
  std::vector<double> bal, head, medium, tail, trace;
  for (const auto& outcome : result.seeds) {
    if (outcome.status != "ok") continue;
    const MetricsRecord* last = nullptr;
    for (const auto& r : result.records) {
      if (r.seed == outcome.seed) last = &r;
    }
    if (!last) continue;
    if (last->bal_acc) bal.push_back(*last->bal_acc);
    if (last->acc_head) head.push_back(*last->acc_head);
    if (last->acc_medium) medium.push_back(*last->acc_medium);
    if (last->acc_tail) tail.push_back(*last->acc_tail);
    if (last->trace_tail) trace.push_back(*last->trace_tail);
  }
  row.bal_acc = mean_std(bal);
  row.acc_head = mean_std(head);
  row.acc_medium = mean_std(medium);
  row.acc_tail = mean_std(tail);
  row.trace_tail = mean_std(trace);
  double passes = 0.0;
  for (const auto& r : result.records) passes += static_cast<double>(r.backward_passes);
  if (!result.records.empty()) row.backward_per_epoch = passes / static_cast<double>(result.records.size());
  return row;
}

std::string cell(const Stat& s) {
  if (s.n == 0) return "-";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f +- %.4f", s.mean, s.stddev);
  return buf;
}

}  // namespace

Stat mean_std(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

ComparisonTable compare_configs(std::span<const ExperimentConfig> configs, const RunOptions& options) {
  if (configs.empty()) fail(ErrorKind::kInvalidArgument, "compare: no configurations");
  for (const auto& c : configs) {
    if (!paired(configs.front(), c)) {
      fail(ErrorKind::kConfig, "compare: '" + c.name + "' does not share dataset, seeds and data order with '" +
                                   configs.front().name + "'");
    }
  }
  ComparisonTable table;
  for (const auto& c : configs) table.rows.push_back(tabulate(c, run_experiment(c, options)));
  const double reference = table.rows.front().bal_acc.mean;
  std::vector<std::size_t> order(table.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.rows[a].bal_acc.mean > table.rows[b].bal_acc.mean;
  });
  for (std::size_t r = 0; r < order.size(); ++r) table.rows[order[r]].rank = r + 1;
  for (auto& row : table.rows) row.bal_acc_delta = row.bal_acc.mean - reference;
  return table;
}

ComparisonTable compare(std::span<const std::string> variants, const nlohmann::json& shared,
                        const RunOptions& options) {
  std::vector<ExperimentConfig> configs;
  const std::string root = shared.value("output_dir", std::string("runs"));
  for (const auto& v : variants) {
    nlohmann::json j = shared;
    j["optimizer"]["variant"] = v;
    j["output_dir"] = (std::filesystem::path(root) / v).string();
    j["name"] = shared.value("name", std::string("experiment")) + "-" + v;
    configs.push_back(parse_config(j));
  }
  return compare_configs(configs, options);
}

std::string format_comparison(const ComparisonTable& table) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-4s %-9s %-18s %-18s %-18s %-18s %-20s %-9s %s\n", "rank", "variant",
                "bal_acc", "head", "medium", "tail", "trace_tail", "passes/ep", "delta");
  out += buf;
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%-4zu %-9s %-18s %-18s %-18s %-18s %-20s %-9.1f %+.4f\n", r.rank,
                  r.variant.c_str(), cell(r.bal_acc).c_str(), cell(r.acc_head).c_str(), cell(r.acc_medium).c_str(),
                  cell(r.acc_tail).c_str(), cell(r.trace_tail).c_str(), r.backward_per_epoch, r.bal_acc_delta);
    out += buf;
  }
  return out;
}

void write_comparison_csv(const ComparisonTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  out << "variant,rank,bal_acc_mean,bal_acc_std,acc_head_mean,acc_medium_mean,acc_tail_mean,trace_tail_mean,"
         "backward_per_epoch,bal_acc_delta,seeds\n";
  char buf[512];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", r.variant.c_str(),
                  r.rank, r.bal_acc.mean, r.bal_acc.stddev, r.acc_head.mean, r.acc_medium.mean, r.acc_tail.mean,
                  r.trace_tail.mean, r.backward_per_epoch, r.bal_acc_delta, r.bal_acc.n);
    out << buf;
  }
}

}  // namespace sharplab
