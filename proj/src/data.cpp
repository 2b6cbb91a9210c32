#include "sharplab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "sharplab/error.hpp"

namespace sharplab {

void Dataset::validate() const {
  if (features.rank() != 2) fail(ErrorKind::kShape, "dataset features must be a matrix");
  if (features.rows() != labels.size()) {
    fail(ErrorKind::kShape, "dataset has " + std::to_string(features.rows()) + " rows but " +
                                std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      fail(ErrorKind::kInvalidArgument, "label " + std::to_string(y) + " out of range [0," +
                                            std::to_string(num_classes) + ")");
    }
  }
}

std::pair<Tensor, std::vector<int>> Dataset::gather_rows(std::span<const std::size_t> indices) const {
  const std::size_t d = input_dim();
  Tensor x({indices.size(), d});
  std::vector<int> y(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    for (std::size_t j = 0; j < d; ++j) x.at(r, j) = features.at(src, j);
    y[r] = labels[src];
  }
  return {std::move(x), std::move(y)};
}

void DatasetConfig::validate() const {
  if (num_classes < 2) fail(ErrorKind::kInvalidArgument, "dataset needs at least 2 classes");
  if (n_max < num_classes) fail(ErrorKind::kInvalidArgument, "n_max must be >= number of classes");
  if (!(imbalance_ratio >= 1.0)) fail(ErrorKind::kInvalidArgument, "imbalance ratio must be >= 1");
  if (input_dim < 1) fail(ErrorKind::kInvalidArgument, "input_dim must be >= 1");
  if (!(noise_scale >= 0.0)) fail(ErrorKind::kInvalidArgument, "noise_scale must be >= 0");
  if (!(mean_separation >= 0.0)) fail(ErrorKind::kInvalidArgument, "mean_separation must be >= 0");
}

std::vector<std::size_t> lt_counts(std::size_t n_max, std::size_t num_classes, double imbalance_ratio) {
  if (num_classes < 2) fail(ErrorKind::kInvalidArgument, "lt_counts: need at least 2 classes");
  if (!(imbalance_ratio >= 1.0)) fail(ErrorKind::kInvalidArgument, "lt_counts: imbalance ratio must be >= 1");
  std::vector<std::size_t> counts(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t y = 0; y < num_classes; ++y) {
    const double n = static_cast<double>(n_max) * std::pow(imbalance_ratio, -static_cast<double>(y) / last);
    counts[y] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
  }
  return counts;
}

namespace {

Tensor place_means(const DatasetConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t c = cfg.num_classes, d = cfg.input_dim;
  double radius = std::max(cfg.mean_separation, 1e-12);
  Tensor means({c, d});
  for (int attempt = 0;; ++attempt) {
    bool ok = true;
    for (std::size_t y = 0; y < c && ok; ++y) {
      bool placed = false;
      for (int tries = 0; tries < 1000 && !placed; ++tries) {
        double nn = 0.0;
        std::vector<double> v(d);
        for (double& x : v) {
          x = normal(rng);
          nn += x * x;
        }
        nn = std::sqrt(nn);
        for (double& x : v) x *= radius / nn;
        placed = true;
        for (std::size_t o = 0; o < y && placed; ++o) {
          double dist = 0.0;
          for (std::size_t j = 0; j < d; ++j) dist += (v[j] - means.at(o, j)) * (v[j] - means.at(o, j));
          placed = std::sqrt(dist) >= cfg.mean_separation;
        }
        if (placed) std::copy(v.begin(), v.end(), &means.at(y, 0));
      }
      ok = placed;
    }
    if (ok) return means;
    radius *= 1.1;
    if (attempt > 200) fail(ErrorKind::kNumeric, "could not place class means with the requested separation");
  }
}

Dataset sample_gaussian(const Tensor& means, std::span<const std::size_t> counts, double noise,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = means.cols();
  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  Dataset out;
  out.num_classes = counts.size();
  out.features = Tensor({n, d});
  out.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t y = 0; y < counts.size(); ++y) {
    for (std::size_t s = 0; s < counts[y]; ++s, ++row) {
      for (std::size_t j = 0; j < d; ++j) out.features.at(row, j) = means.at(y, j) + noise * normal(rng);
      out.labels.push_back(static_cast<int>(y));
    }
  }
  return out;
}

}  // namespace

SyntheticSplits synth_gaussian_lt(const DatasetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SyntheticSplits out;
  out.class_means = place_means(cfg, rng);
  const auto counts = lt_counts(cfg.n_max, cfg.num_classes, cfg.imbalance_ratio);
  out.train = sample_gaussian(out.class_means, counts, cfg.noise_scale, rng);
  const std::vector<std::size_t> balanced(cfg.num_classes, cfg.test_per_class);
  out.test = sample_gaussian(out.class_means, balanced, cfg.noise_scale, rng);
  out.priors = out.train.priors();
  return out;
}

ClassPartition partition_classes(const ClassPriors& priors, std::size_t t_head, std::size_t t_tail) {
  if (t_head < t_tail) fail(ErrorKind::kInvalidArgument, "partition: t_head must be >= t_tail");
  ClassPartition p;
  p.t_head = t_head;
  p.t_tail = t_tail;
  for (std::size_t y = 0; y < priors.num_classes(); ++y) {
    const std::size_t n = priors.counts()[y];
    if (n > t_head) {
      p.head.push_back(y);
    } else if (n < t_tail) {
      p.tail.push_back(y);
    } else {
      p.medium.push_back(y);
    }
  }
  return p;
}

BalancedAccuracy balanced_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                   const ClassPartition& partition, std::size_t num_classes) {
  if (labels.empty()) fail(ErrorKind::kInvalidArgument, "balanced_accuracy: empty input");
  if (predictions.size() != labels.size()) {
    fail(ErrorKind::kShape, "balanced_accuracy: prediction and label counts differ");
  }
  std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      fail(ErrorKind::kInvalidArgument, "balanced_accuracy: label " + std::to_string(y) + " out of range");
    }
    ++total[static_cast<std::size_t>(y)];
    if (predictions[i] == y) ++correct[static_cast<std::size_t>(y)];
  }
  BalancedAccuracy acc;
  acc.per_class.assign(num_classes, std::nan(""));
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t y = 0; y < num_classes; ++y) {
    if (total[y] == 0) {
      acc.excluded_classes.push_back(y);
      continue;
    }
    acc.per_class[y] = static_cast<double>(correct[y]) / static_cast<double>(total[y]);
    sum += acc.per_class[y];
    ++used;
  }
  acc.overall = sum / static_cast<double>(used);
  auto group_mean = [&](const std::vector<std::size_t>& members) -> std::optional<double> {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t y : members) {
      if (y >= num_classes || total[y] == 0) continue;
      s += acc.per_class[y];
      ++k;
    }
    if (k == 0) return std::nullopt;
    return s / static_cast<double>(k);
  };
  acc.head = group_mean(partition.head);
  acc.medium = group_mean(partition.medium);
  acc.tail = group_mean(partition.tail);
  return acc;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(split_csv_line(line));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) fail(ErrorKind::kParse, path + ": no rows");

  bool header = false;
  if (options.has_header) {
    header = *options.has_header;
  } else {
    double tmp;
    header = std::any_of(rows[0].begin(), rows[0].end(), [&](const std::string& f) { return !parse_double(f, tmp); });
  }
  const std::size_t width = rows[0].size();
  if (width < 2) fail(ErrorKind::kParse, path + ":" + std::to_string(line_numbers[0]) + ": need features and a label");
  std::size_t label_col = width - 1;
  if (!options.label_column.empty()) {
    if (!header) fail(ErrorKind::kParse, path + ": label column named but the file has no header");
    auto it = std::find(rows[0].begin(), rows[0].end(), options.label_column);
    if (it == rows[0].end()) fail(ErrorKind::kParse, path + ": no column named '" + options.label_column + "'");
    label_col = static_cast<std::size_t>(it - rows[0].begin());
  }

  const std::size_t first = header ? 1 : 0;
  const std::size_t n = rows.size() - first;
  Dataset data;
  data.features = Tensor({n, width - 1});
  data.labels.resize(n);
  int max_label = -1;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& fields = rows[r + first];
    const std::string where = path + ":" + std::to_string(line_numbers[r + first]);
    if (fields.size() != width) {
      fail(ErrorKind::kParse, where + ": expected " + std::to_string(width) + " fields, got " +
                                  std::to_string(fields.size()));
    }
    std::size_t j = 0;
    for (std::size_t col = 0; col < width; ++col) {
      double v = 0.0;
      if (!parse_double(fields[col], v)) fail(ErrorKind::kParse, where + ": cannot parse '" + fields[col] + "'");
      if (col == label_col) {
        if (v != std::floor(v) || v < 0.0) {
          fail(ErrorKind::kInvalidArgument, where + ": label '" + fields[col] + "' out of range");
        }
        data.labels[r] = static_cast<int>(v);
        max_label = std::max(max_label, data.labels[r]);
        if (options.num_classes && static_cast<std::size_t>(data.labels[r]) >= *options.num_classes) {
          fail(ErrorKind::kInvalidArgument, where + ": label " + fields[col] + " out of range [0," +
                                                std::to_string(*options.num_classes) + ")");
        }
      } else {
        data.features.at(r, j++) = v;
      }
    }
  }
  data.num_classes = options.num_classes ? *options.num_classes : static_cast<std::size_t>(max_label + 1);
  if (n == 0) fail(ErrorKind::kParse, path + ": header only, no data rows");
  return data;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kNotFound, "cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

IdxArray parse_idx(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0) fail(ErrorKind::kParse, path + ": bad IDX magic");
  const unsigned type = bytes[2];
  const std::size_t ndim = bytes[3];
  std::size_t width = 0;
  switch (type) {
    case 0x08: case 0x09: width = 1; break;
    case 0x0B: width = 2; break;
    case 0x0C: case 0x0D: width = 4; break;
    case 0x0E: width = 8; break;
    default: fail(ErrorKind::kParse, path + ": unknown IDX element type");
  }
  std::size_t pos = 4;
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
           (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
  };
  IdxArray arr;
  if (bytes.size() < pos + 4 * ndim) fail(ErrorKind::kParse, path + ": truncated IDX header");
  for (std::size_t i = 0; i < ndim; ++i, pos += 4) arr.dims.push_back(be32(pos));
  const std::size_t count = shape_size(arr.dims);
  if (bytes.size() != pos + count * width) fail(ErrorKind::kParse, path + ": IDX payload size mismatch");
  arr.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, pos += width) {
    std::uint64_t raw = 0;
    for (std::size_t b = 0; b < width; ++b) raw = (raw << 8) | bytes[pos + b];
    switch (type) {
      case 0x08: arr.values[i] = static_cast<double>(raw); break;
      case 0x09: arr.values[i] = static_cast<double>(static_cast<std::int8_t>(raw)); break;
      case 0x0B: arr.values[i] = static_cast<double>(static_cast<std::int16_t>(raw)); break;
      case 0x0C: arr.values[i] = static_cast<double>(static_cast<std::int32_t>(raw)); break;
      case 0x0D: {
        const auto bits = static_cast<std::uint32_t>(raw);
        float f;
        std::memcpy(&f, &bits, sizeof f);
        arr.values[i] = f;
        break;
      }
      case 0x0E: {
        double d;
        std::memcpy(&d, &raw, sizeof d);
        arr.values[i] = d;
        break;
      }
    }
  }
  return arr;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const IdxArray images = parse_idx(images_path);
  const IdxArray labels = parse_idx(labels_path);
  if (images.dims.empty() || labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
    fail(ErrorKind::kParse, "IDX pair: label count does not match image count");
  }
  const std::size_t n = images.dims[0];
  const std::size_t d = n == 0 ? 0 : images.values.size() / n;
  Dataset data;
  data.features = Tensor({n, d}, images.values);
  data.labels.resize(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = labels.values[i];
    if (v < 0.0 || v != std::floor(v)) fail(ErrorKind::kInvalidArgument, "IDX label out of range at " + std::to_string(i));
    data.labels[i] = static_cast<int>(v);
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = static_cast<std::size_t>(max_label + 1);
  return data;
}

Dataset load_tabular(const std::string& path, TabularFormat format, const CsvOptions& csv,
                     const std::string& label_path) {
  if (format == TabularFormat::kCsv) return load_csv(path, csv);
  return load_idx(path, label_path);
}

Dataset subsample_long_tailed(const Dataset& data, double imbalance_ratio, std::uint64_t seed) {
  data.validate();
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> order(data.num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return by_class[a].size() > by_class[b].size(); });
  const auto target = lt_counts(by_class[order[0]].size(), data.num_classes, imbalance_ratio);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    auto members = by_class[order[rank]];
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t take = std::min(target[rank], members.size());
    keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(keep.begin(), keep.end());
  auto [x, y] = data.gather_rows(keep);
  return Dataset{std::move(x), std::move(y), data.num_classes};
}

std::pair<Dataset, Dataset> split_balanced(const Dataset& data, std::size_t per_class, std::uint64_t seed) {
  data.validate();
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t take = std::min(per_class, members.size());
    test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  auto [xtr, ytr] = data.gather_rows(train);
  auto [xte, yte] = data.gather_rows(test);
  return {Dataset{std::move(xtr), std::move(ytr), data.num_classes},
          Dataset{std::move(xte), std::move(yte), data.num_classes}};
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  const std::size_t d = data.input_dim();
  for (std::size_t j = 0; j < d; ++j) out << "x" << j << ",";
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features.at(i, j));
      out << buf << ",";
    }
    out << data.labels[i] << "\n";
  }
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path + "'");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) fail(ErrorKind::kInvalidArgument, "batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace sharplab
