#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/parameter_set.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the record
/// is topologically sorted by construction and a backward sweep is a single
/// reverse pass over it.
class Tape {
 public:
  /// Propagates the gradient of node `self` to its inputs. `grads` is indexed
  /// by node id; entries of inputs that do not require a gradient are empty.
  using BackwardFn =
      std::function<void(const Tape& tape, std::size_t self, std::vector<Tensor>& grads)>;

  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    int param_index = -1;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value, std::string op = "constant");
  /// Registers every entry of `params` as a differentiable leaf; returns them
  /// in parameter order. May be called once per tape.
  std::vector<Var> bind(const ParameterSet& params);

  /// Appends an op node. `backward` may be empty for ops with no gradient.
  Var record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  bool owns(Var v) const { return v.tape == this && v.id < nodes_.size(); }

  const ParameterSet& bound_parameters() const { return layout_; }

 private:
  std::vector<Node> nodes_;
  ParameterSet layout_;
  bool bound_ = false;
};

/// One full reverse sweep from `output`; returns d output / d params with the
/// layout passed to Tape::bind. Increments the backward-pass counter.
ParameterSet backward(const Tape& tape, Var output);

/// Number of backward sweeps performed by the calling thread.
std::uint64_t backward_pass_count();

/// Central differences over every coordinate of `params`.
ParameterSet finite_diff_gradient(const std::function<double(const ParameterSet&)>& f,
                                  const ParameterSet& params, double h);

// Primitives. All inputs must live on the same tape.

/// (m,k) x (k,n) -> (m,n)
Var matmul(Var a, Var b);
Var transpose(Var a);
/// (m,n) + (n) broadcast over rows.
Var add_bias(Var a, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var a);
/// Row-wise log-softmax of a (m,n) matrix.
Var log_softmax(Var a);
/// Picks a(i, labels[i]) for each row; returns shape (m).
Var gather(Var a, std::span<const int> labels);
/// Divides each row by max(||row||_2, eps).
Var row_normalize(Var a, double eps = 1e-12);
Var sum(Var a);
Var mean(Var a);

}  // namespace sharplab
