#include "sharplab/parameter_set.hpp"

#include <algorithm>
#include <cmath>

#include "sharplab/error.hpp"

namespace sharplab {

namespace {

void require_layout(const ParameterSet& a, const ParameterSet& b, const char* what) {
  if (!a.same_layout(b)) {
    fail(ErrorKind::kShape, std::string(what) + ": parameter sets have different layouts");
  }
}

}  // namespace

void ParameterSet::add(std::string name, Tensor value) {
  for (const auto& e : entries_) {
    if (e.name == name) fail(ErrorKind::kInvalidArgument, "duplicate parameter name '" + name + "'");
  }
  entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t k = 0;
  for (const auto& e : entries_) k += e.value.size();
  return k;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  fail(ErrorKind::kNotFound, "no parameter named '" + name + "'");
}

Tensor& ParameterSet::get(const std::string& name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  fail(ErrorKind::kNotFound, "no parameter named '" + name + "'");
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_scalars());
  for (const auto& e : entries_) {
    flat.insert(flat.end(), e.value.raw().begin(), e.value.raw().end());
  }
  return flat;
}

ParameterSet ParameterSet::unflatten(std::span<const double> flat) const {
  ParameterSet out = *this;
  out.assign(flat);
  return out;
}

void ParameterSet::assign(std::span<const double> flat) {
  if (flat.size() != num_scalars()) {
    fail(ErrorKind::kShape, "flat vector of length " + std::to_string(flat.size()) +
                                " does not match parameter count " + std::to_string(num_scalars()));
  }
  std::size_t offset = 0;
  for (auto& e : entries_) {
    auto& raw = e.value.raw();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + raw.size()), raw.begin());
    offset += raw.size();
  }
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, Tensor::zeros(e.value.shape()));
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
  }
  return true;
}

bool ParameterSet::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const Entry& e) { return e.value.all_finite(); });
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    if (a.tensor(i).raw() != b.tensor(i).raw()) return false;
  }
  return true;
}

double dot(const ParameterSet& a, const ParameterSet& b) {
  require_layout(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) {
    const auto& x = a.tensor(i).raw();
    const auto& y = b.tensor(i).raw();
    for (std::size_t j = 0; j < x.size(); ++j) acc += x[j] * y[j];
  }
  return acc;
}

double l2_norm(const ParameterSet& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const ParameterSet& x, ParameterSet& y) {
  require_layout(x, y, "axpy");
  for (std::size_t i = 0; i < x.count(); ++i) {
    const auto& xs = x.tensor(i).raw();
    auto& ys = y.tensor(i).raw();
    for (std::size_t j = 0; j < xs.size(); ++j) ys[j] += alpha * xs[j];
  }
}

ParameterSet scaled(const ParameterSet& x, double alpha) {
  ParameterSet out = x;
  for (std::size_t i = 0; i < out.count(); ++i) {
    for (double& v : out.tensor(i).raw()) v *= alpha;
  }
  return out;
}

ParameterSet plus(const ParameterSet& a, const ParameterSet& b) {
  ParameterSet out = a;
  axpy(1.0, b, out);
  return out;
}

double max_abs_diff(const ParameterSet& a, const ParameterSet& b) {
  require_layout(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) {
    const auto& x = a.tensor(i).raw();
    const auto& y = b.tensor(i).raw();
    for (std::size_t j = 0; j < x.size(); ++j) worst = std::max(worst, std::abs(x[j] - y[j]));
  }
  return worst;
}

}  // namespace sharplab
