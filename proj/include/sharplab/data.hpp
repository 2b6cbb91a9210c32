#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/losses.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

/// Features (N x d) with integer labels in [0, num_classes).
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return features.rank() == 2 ? features.cols() : 0; }
  void validate() const;
  /// Rows `indices` as a new (inputs, labels) pair.
  std::pair<Tensor, std::vector<int>> gather_rows(std::span<const std::size_t> indices) const;
  ClassPriors priors() const { return ClassPriors::from_labels(labels, num_classes); }
};

struct DatasetConfig {
  std::size_t num_classes = 10;
  std::size_t input_dim = 20;
  std::size_t n_max = 500;
  double imbalance_ratio = 100.0;
  double mean_separation = 4.0;
  double noise_scale = 1.0;
  std::size_t test_per_class = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

/// n_y = round(n_max * IR^(-y/(C-1))) for y = 0..C-1, clamped to >= 1.
std::vector<std::size_t> lt_counts(std::size_t n_max, std::size_t num_classes, double imbalance_ratio);

struct SyntheticSplits {
  Dataset train;
  Dataset test;
  ClassPriors priors;
  Tensor class_means;
};

/// Isotropic Gaussian classes around seeded means with pairwise distance at
/// least mean_separation; long-tailed train split, balanced test split.
SyntheticSplits synth_gaussian_lt(const DatasetConfig& cfg);

struct ClassPartition {
  std::vector<std::size_t> head;
  std::vector<std::size_t> medium;
  std::vector<std::size_t> tail;
  std::size_t t_head = 100;
  std::size_t t_tail = 20;
};

/// head: n_y > t_head; tail: n_y < t_tail; everything else medium.
ClassPartition partition_classes(const ClassPriors& priors, std::size_t t_head, std::size_t t_tail);

struct BalancedAccuracy {
  double overall = 0.0;
  std::optional<double> head;
  std::optional<double> medium;
  std::optional<double> tail;
  /// NaN for classes without test samples.
  std::vector<double> per_class;
  std::vector<std::size_t> excluded_classes;
};

BalancedAccuracy balanced_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                   const ClassPartition& partition, std::size_t num_classes);

enum class TabularFormat { kCsv, kIdx };

struct CsvOptions {
  /// Column holding the label; empty selects the last column.
  std::string label_column;
  /// nullopt: detect a header by checking whether the first row parses as numbers.
  std::optional<bool> has_header;
  /// When set, labels >= num_classes are rejected; otherwise C = max label + 1.
  std::optional<std::size_t> num_classes;
};

/// CSV with a label column, or an IDX pair where `path` names the image file
/// and `label_path` the label file.
Dataset load_tabular(const std::string& path, TabularFormat format, const CsvOptions& csv = {},
                     const std::string& label_path = {});
Dataset load_csv(const std::string& path, const CsvOptions& options = {});
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Keeps lt_counts(max class count, C, IR) samples per class; classes are
/// ranked by their original count (ties by id) and samples picked by a seeded shuffle.
Dataset subsample_long_tailed(const Dataset& data, double imbalance_ratio, std::uint64_t seed);

/// Splits off `per_class` samples of each class (seeded) as a balanced test set; returns (rest, test).
std::pair<Dataset, Dataset> split_balanced(const Dataset& data, std::size_t per_class, std::uint64_t seed);

void write_csv(const Dataset& data, const std::string& path);

/// Mini-batches for one epoch: a seeded shuffle of [0, n) cut into chunks.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

}  // namespace sharplab
