#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sharplab/tensor.hpp"

namespace sharplab {

/// Ordered collection of named parameter tensors, treated as one flat vector.
///
/// Gradients, perturbations and momentum buffers share the layout of the
/// parameters they belong to, so the vector helpers below require matching
/// names and shapes.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  ParameterSet() = default;

  void add(std::string name, Tensor value);

  std::size_t count() const { return entries_.size(); }
  std::size_t num_scalars() const;
  bool empty() const { return entries_.empty(); }

  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Tensor& tensor(std::size_t i) { return entries_.at(i).value; }
  const Tensor& tensor(std::size_t i) const { return entries_.at(i).value; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::span<const Entry> entries() const { return entries_; }

  std::vector<double> flatten() const;
  /// Same names/shapes as *this, values taken from `flat`.
  ParameterSet unflatten(std::span<const double> flat) const;
  void assign(std::span<const double> flat);

  ParameterSet zeros_like() const;
  bool same_layout(const ParameterSet& other) const;
  bool all_finite() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Entry> entries_;
};

double dot(const ParameterSet& a, const ParameterSet& b);
double l2_norm(const ParameterSet& a);
/// y += alpha * x
void axpy(double alpha, const ParameterSet& x, ParameterSet& y);
ParameterSet scaled(const ParameterSet& x, double alpha);
ParameterSet plus(const ParameterSet& a, const ParameterSet& b);
double max_abs_diff(const ParameterSet& a, const ParameterSet& b);

}  // namespace sharplab
