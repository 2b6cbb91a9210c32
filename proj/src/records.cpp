#include <bit>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sharplab/error.hpp"
#include "sharplab/harness.hpp"

namespace sharplab {

namespace {

using OptField = std::optional<double> MetricsRecord::*;

struct OptColumn {
  const char* name;
  OptField field;
};

constexpr OptColumn kAccuracy[] = {
    {"train_loss", &MetricsRecord::train_loss}, {"bal_acc", &MetricsRecord::bal_acc},
    {"acc_head", &MetricsRecord::acc_head},     {"acc_medium", &MetricsRecord::acc_medium},
    {"acc_tail", &MetricsRecord::acc_tail},     {"sharp_head", &MetricsRecord::sharp_head},
    {"sharp_medium", &MetricsRecord::sharp_medium}, {"sharp_tail", &MetricsRecord::sharp_tail},
};

constexpr OptColumn kCurvature[] = {
    {"trace_all", &MetricsRecord::trace_all},
    {"trace_head", &MetricsRecord::trace_head},
    {"trace_medium", &MetricsRecord::trace_medium},
    {"trace_tail", &MetricsRecord::trace_tail},
    {"lambda_max_all", &MetricsRecord::lambda_max_all},
    {"lambda_max_head", &MetricsRecord::lambda_max_head},
    {"lambda_max_medium", &MetricsRecord::lambda_max_medium},
    {"lambda_max_tail", &MetricsRecord::lambda_max_tail},
};

constexpr OptColumn kBound[] = {
    {"bound_I", &MetricsRecord::bound_I},
    {"bound_II", &MetricsRecord::bound_II},
    {"bound_III", &MetricsRecord::bound_III},
    {"bound_total", &MetricsRecord::bound_total},
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::kParse, "metrics line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::kParse, "metrics line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

std::optional<double> parse_opt(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, line);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void put_u64_le(std::ostream& out, std::uint64_t bits) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t get_u64_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return bits;
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns = [] {
    std::vector<std::string> c{"seed", "epoch", "status"};
    for (const auto& col : kAccuracy) c.emplace_back(col.name);
    for (const char* name : {"backward_passes", "batches", "rho", "learning_rate"}) c.emplace_back(name);
    for (const auto& col : kCurvature) c.emplace_back(col.name);
    c.emplace_back("hessian_probes");
    for (const auto& col : kBound) c.emplace_back(col.name);
    return c;
  }();
  return columns;
}

std::string metrics_csv(std::span<const MetricsRecord> records) {
  std::string out;
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& r : records) {
    std::string line = std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," + r.status;
    for (const auto& col : kAccuracy) line += "," + format_opt(r.*col.field);
    line += "," + std::to_string(r.backward_passes) + "," + std::to_string(r.batches) + "," + format_double(r.rho) +
            "," + format_double(r.learning_rate);
    for (const auto& col : kCurvature) line += "," + format_opt(r.*col.field);
    line += "," + std::to_string(r.hessian_probes);
    for (const auto& col : kBound) line += "," + format_opt(r.*col.field);
    out += line + "\n";
  }
  return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kParse, "metrics: missing header");
  if (split_commas(line) != metrics_columns()) fail(ErrorKind::kParse, "metrics: unexpected header");
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != metrics_columns().size()) {
      fail(ErrorKind::kParse, "metrics line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(metrics_columns().size()) + " fields, got " +
                                  std::to_string(cells.size()));
    }
    MetricsRecord r;
    std::size_t i = 0;
    r.seed = parse_uint(cells[i++], lineno);
    r.epoch = parse_uint(cells[i++], lineno);
    r.status = cells[i++];
    for (const auto& col : kAccuracy) r.*col.field = parse_opt(cells[i++], lineno);
    r.backward_passes = parse_uint(cells[i++], lineno);
    r.batches = parse_uint(cells[i++], lineno);
    r.rho = parse_double(cells[i++], lineno);
    r.learning_rate = parse_double(cells[i++], lineno);
    for (const auto& col : kCurvature) r.*col.field = parse_opt(cells[i++], lineno);
    r.hessian_probes = parse_uint(cells[i++], lineno);
    for (const auto& col : kBound) r.*col.field = parse_opt(cells[i++], lineno);
    out.push_back(std::move(r));
  }
  return out;
}

void write_metrics_csv(std::span<const MetricsRecord> records, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  out << metrics_csv(records);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_metrics_csv(buf.str());
}

void save_checkpoint(const ParameterSet& params, const ModelSpec& spec, const std::string& manifest_path) {
  const std::filesystem::path manifest(manifest_path);
  std::filesystem::path payload = manifest;
  payload.replace_extension(".bin");

  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : params.entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}});
    offset += e.value.size();
  }
  const nlohmann::json doc{
      {"format", "sharplab-checkpoint"},
      {"version", 1},
      {"model",
       {{"input_dim", spec.input_dim},
        {"hidden_dims", spec.hidden_dims},
        {"num_classes", spec.num_classes},
        {"classifier", spec.classifier == ClassifierKind::kCosine ? "cosine" : "plain"},
        {"cosine_scale", spec.cosine_scale},
        {"init_seed", spec.init_seed}}},
      {"tensors", tensors},
      {"num_scalars", offset},
      {"payload", payload.filename().string()}};

  std::ofstream bin(payload, std::ios::binary);
  if (!bin) fail(ErrorKind::kIo, "cannot write '" + payload.string() + "'");
  for (const auto& e : params.entries()) {
    for (double v : e.value.values()) put_u64_le(bin, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream out(manifest);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + manifest_path + "'");
  out << doc.dump(2) << "\n";
}

ParameterSet load_checkpoint(const std::string& manifest_path, ModelSpec* spec) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::kNotFound, "cannot open checkpoint '" + manifest_path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    if (doc.at("format") != "sharplab-checkpoint") fail(ErrorKind::kParse, manifest_path + ": not a checkpoint");
    const auto payload = std::filesystem::path(manifest_path).parent_path() / doc.at("payload").get<std::string>();
    std::ifstream bin(payload, std::ios::binary);
    if (!bin) fail(ErrorKind::kNotFound, "cannot open checkpoint payload '" + payload.string() + "'");
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    const auto total = doc.at("num_scalars").get<std::size_t>();
    if (bytes.size() != total * 8) {
      fail(ErrorKind::kParse, payload.string() + ": expected " + std::to_string(total * 8) + " bytes, found " +
                                  std::to_string(bytes.size()));
    }
    ParameterSet params;
    for (const auto& t : doc.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t n = shape_size(shape);
      if (offset + n > total) fail(ErrorKind::kParse, manifest_path + ": tensor extends past the payload");
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_u64_le(&bytes[(offset + i) * 8]));
      params.add(t.at("name").get<std::string>(), Tensor(shape, std::move(values)));
    }
    if (spec) {
      const auto& m = doc.at("model");
      spec->input_dim = m.at("input_dim").get<std::size_t>();
      spec->hidden_dims = m.at("hidden_dims").get<std::vector<std::size_t>>();
      spec->num_classes = m.at("num_classes").get<std::size_t>();
      spec->classifier = m.at("classifier") == "cosine" ? ClassifierKind::kCosine : ClassifierKind::kPlain;
      spec->cosine_scale = m.at("cosine_scale").get<double>();
      spec->init_seed = m.at("init_seed").get<std::uint64_t>();
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, manifest_path + ": " + e.what());
  }
}

}  // namespace sharplab
