#include <cmath>
#include <fstream>
#include <set>

#include "sharplab/error.hpp"
#include "sharplab/harness.hpp"

namespace sharplab {

namespace {

using nlohmann::json;

bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

/// Reads one JSON object, tracking which keys were consumed so that anything
/// left over can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::kConfig, path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const char* key) const { return path_ + "." + key; }

  double number(const char* key, double fallback) {
    const json* v = child(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(ErrorKind::kConfig, at(key) + ": expected a number");
    return v->get<double>();
  }

  std::size_t count(const char* key, std::size_t fallback) {
    const json* v = child(key);
    if (!v) return fallback;
    if (!non_negative_integer(*v)) fail(ErrorKind::kConfig, at(key) + ": expected a non-negative integer");
    return v->get<std::size_t>();
  }

  bool boolean(const char* key, bool fallback) {
    const json* v = child(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(ErrorKind::kConfig, at(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string string(const char* key, const std::string& fallback) {
    const json* v = child(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(ErrorKind::kConfig, at(key) + ": expected a string");
    return v->get<std::string>();
  }

  std::vector<std::size_t> counts(const char* key, std::vector<std::size_t> fallback) {
    const json* v = child(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(ErrorKind::kConfig, at(key) + ": expected an array");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
      if (!non_negative_integer(e)) fail(ErrorKind::kConfig, at(key) + ": expected non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  std::vector<double> numbers(const char* key) {
    const json* v = child(key);
    if (!v) return {};
    if (!v->is_array()) fail(ErrorKind::kConfig, at(key) + ": expected an array");
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number()) fail(ErrorKind::kConfig, at(key) + ": expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(ErrorKind::kConfig, path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

DataConfig parse_data(const json& j) {
  ObjectReader r(j, "dataset");
  DataConfig d;
  const std::string source = r.string("source", "synthetic");
  d.seed = r.count("seed", 0);
  d.test_per_class = r.count("test_per_class", 50);
  if (source == "synthetic") {
    d.source = DataSource::kSynthetic;
    auto& s = d.synthetic;
    s.num_classes = r.count("num_classes", s.num_classes);
    s.input_dim = r.count("input_dim", s.input_dim);
    s.n_max = r.count("n_max", s.n_max);
    s.imbalance_ratio = r.number("imbalance_ratio", s.imbalance_ratio);
    s.mean_separation = r.number("mean_separation", s.mean_separation);
    s.noise_scale = r.number("noise_scale", s.noise_scale);
    s.test_per_class = d.test_per_class;
    s.seed = d.seed;
    s.validate();
  } else if (source == "csv" || source == "idx") {
    d.source = source == "csv" ? DataSource::kCsv : DataSource::kIdx;
    d.path = r.string("path", "");
    if (d.path.empty()) fail(ErrorKind::kConfig, "dataset.path is required for tabular sources");
    d.test_path = r.string("test_path", "");
    d.label_column = d.source == DataSource::kCsv ? r.string("label_column", "") : "";
    if (d.source == DataSource::kIdx) {
      d.label_path = r.string("labels", "");
      d.test_label_path = r.string("test_labels", "");
      if (d.label_path.empty()) fail(ErrorKind::kConfig, "dataset.labels is required for idx sources");
    }
    if (r.has("imbalance_ratio")) d.imbalance_ratio = r.number("imbalance_ratio", 1.0);
  } else {
    fail(ErrorKind::kConfig, "dataset.source: expected synthetic, csv or idx");
  }
  r.finish();
  return d;
}

ModelSpec parse_model(const json& j, std::size_t num_classes, std::size_t input_dim) {
  ObjectReader r(j, "model");
  ModelSpec m;
  m.hidden_dims = r.counts("hidden_dims", {64});
  const std::string kind = r.string("classifier", "plain");
  if (kind == "plain") {
    m.classifier = ClassifierKind::kPlain;
  } else if (kind == "cosine") {
    m.classifier = ClassifierKind::kCosine;
  } else {
    fail(ErrorKind::kConfig, "model.classifier: expected plain or cosine");
  }
  m.cosine_scale = r.number("cosine_scale", m.cosine_scale);
  r.finish();
  m.num_classes = num_classes;
  m.input_dim = input_dim;
  return m;
}

LossSpec parse_loss(const json& j, std::size_t epochs) {
  ObjectReader r(j, "loss");
  LossSpec l;
  const std::string kind = r.string("kind", "CE");
  if (kind == "CE") l.kind = LossKind::kCE;
  else if (kind == "LA") l.kind = LossKind::kLA;
  else if (kind == "LDAM") l.kind = LossKind::kLDAM;
  else if (kind == "VS") l.kind = LossKind::kVS;
  else fail(ErrorKind::kConfig, "loss.kind: expected CE, LA, LDAM or VS");
  l.tau = r.number("tau", l.tau);
  l.ldam_max_margin = r.number("ldam_max_margin", l.ldam_max_margin);
  l.vs_exponent = r.number("vs_exponent", l.vs_exponent);
  if (const json* drw = r.child("drw")) {
    ObjectReader dr(*drw, "loss.drw");
    DrwSchedule s;
    s.start_epoch = dr.count("start_epoch", static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(epochs))));
    s.beta = dr.number("beta", s.beta);
    dr.finish();
    l.drw = s;
  }
  r.finish();
  try {
    l.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("loss: ") + e.what());
  }
  return l;
}

TrainConfig parse_train(const json& j) {
  ObjectReader r(j, "optimizer");
  TrainConfig t;
  t.sharpness.variant = parse_variant(r.string("variant", "sgd"));
  t.sharpness.rho = r.number("rho", t.sharpness.rho);
  t.sharpness.lambda = r.number("lambda", t.sharpness.lambda);
  t.sharpness.gamma = r.number("gamma", t.sharpness.gamma);
  if (r.has("tail_set")) {
    t.sharpness.tail_set = r.counts("tail_set", {});
    t.tail_set_given = true;
  }
  t.sharpness.rho_per_class = r.numbers("rho_per_class");
  t.sharpness.explicit_weights = r.numbers("explicit_weights");
  if (r.has("rho_head")) t.rho_head = r.number("rho_head", 0.0);
  if (r.has("rho_tail")) t.rho_tail = r.number("rho_tail", 0.0);
  t.sgd.learning_rate = r.number("lr", t.sgd.learning_rate);
  t.sgd.momentum = r.number("momentum", t.sgd.momentum);
  t.sgd.weight_decay = r.number("weight_decay", t.sgd.weight_decay);
  t.batch_size = r.count("batch_size", t.batch_size);
  t.epochs = r.count("epochs", t.epochs);
  const std::string sched = r.string("lr_schedule", "constant");
  if (sched == "constant") t.lr_schedule = LrSchedule::kConstant;
  else if (sched == "cosine") t.lr_schedule = LrSchedule::kCosine;
  else fail(ErrorKind::kConfig, "optimizer.lr_schedule: expected constant or cosine");
  t.rho_schedule.base = t.sharpness.rho;
  if (const json* rs = r.child("rho_schedule")) {
    ObjectReader sr(*rs, "optimizer.rho_schedule");
    t.rho_schedule.enabled = true;
    t.rho_schedule.milestone_epoch = sr.count("milestone_epoch", 0);
    t.rho_schedule.multiplier = sr.number("multiplier", 2.0);
    sr.finish();
  }
  r.finish();
  if (t.epochs < 1) fail(ErrorKind::kConfig, "optimizer.epochs must be >= 1");
  if (t.batch_size < 1) fail(ErrorKind::kConfig, "optimizer.batch_size must be >= 1");
  try {
    t.rho_schedule.validate();
    OptimizerState check(t.sgd);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("optimizer: ") + e.what());
  }
  return t;
}

DiagnosticsConfig parse_diagnostics(const json& j) {
  ObjectReader r(j, "diagnostics");
  DiagnosticsConfig d;
  d.hessian_every = r.count("hessian_every", 0);
  d.hessian_at_end = r.boolean("hessian_at_end", false);
  d.hessian.probes = r.count("hessian_probes", d.hessian.probes);
  const std::string probe = r.string("probe_kind", "rademacher");
  if (probe == "rademacher") d.hessian.probe_kind = ProbeKind::kRademacher;
  else if (probe == "gaussian") d.hessian.probe_kind = ProbeKind::kGaussian;
  else fail(ErrorKind::kConfig, "diagnostics.probe_kind: expected rademacher or gaussian");
  d.hessian.power_iterations = r.count("power_iterations", d.hessian.power_iterations);
  d.hessian.power_tol = r.number("power_tol", d.hessian.power_tol);
  d.hessian.fd_step = r.number("fd_step", d.hessian.fd_step);
  d.hessian.seed = r.count("hessian_seed", d.hessian.seed);
  const std::string loss = r.string("hessian_loss", "plain");
  if (loss == "plain") d.hessian_training_loss = false;
  else if (loss == "training") d.hessian_training_loss = true;
  else fail(ErrorKind::kConfig, "diagnostics.hessian_loss: expected plain or training");
  d.sharpness_every = r.count("sharpness_every", 0);
  d.slice_at_end = r.boolean("slice_at_end", false);
  d.slice_half_width = r.number("slice_half_width", d.slice_half_width);
  d.slice_steps = r.count("slice_steps", d.slice_steps);
  d.bound_every = r.count("bound_every", 0);
  d.bound_loss_bound = r.number("bound_loss_bound", d.bound_loss_bound);
  d.bound_delta = r.number("bound_delta", d.bound_delta);
  r.finish();
  if (d.hessian.probes < 1) fail(ErrorKind::kConfig, "diagnostics.hessian_probes must be >= 1");
  if (d.slice_steps % 2 == 0) fail(ErrorKind::kConfig, "diagnostics.slice_steps must be odd");
  return d;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  try {
    ObjectReader r(j, "config");
    ExperimentConfig c;
    c.source = j;
    c.name = r.string("name", c.name);
    const json* data = r.child("dataset");
    if (!data) fail(ErrorKind::kConfig, "config.dataset is required");
    c.data = parse_data(*data);
    if (const json* p = r.child("partition")) {
      ObjectReader pr(*p, "partition");
      c.t_head = pr.count("t_head", c.t_head);
      c.t_tail = pr.count("t_tail", c.t_tail);
      pr.finish();
      if (c.t_head < c.t_tail) fail(ErrorKind::kConfig, "partition.t_head must be >= partition.t_tail");
    }
    const json* opt = r.child("optimizer");
    c.train = parse_train(opt ? *opt : json::object());
    const json* model = r.child("model");
    // Tabular sources fix input_dim and C after loading; prepare_data fills them in.
    c.model = parse_model(model ? *model : json::object(), c.data.synthetic.num_classes, c.data.synthetic.input_dim);
    const json* loss = r.child("loss");
    c.loss = parse_loss(loss ? *loss : json::object(), c.train.epochs);
    const json* diag = r.child("diagnostics");
    c.diagnostics = parse_diagnostics(diag ? *diag : json::object());
    if (r.has("seeds")) {
      const auto seeds = r.counts("seeds", {});
      c.seeds.assign(seeds.begin(), seeds.end());
    } else {
      r.child("seeds");
    }
    if (c.seeds.empty()) fail(ErrorKind::kConfig, "config.seeds must list at least one seed");
    c.data_seed = r.count("data_seed", 0);
    c.output_dir = r.string("output_dir", c.output_dir);
    r.finish();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace sharplab
