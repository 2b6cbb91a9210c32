#include "sharplab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sharplab/error.hpp"

namespace sharplab {

namespace {

thread_local std::uint64_t g_backward_passes = 0;

Tape& same_tape(std::initializer_list<Var> vars, const char* op) {
  Tape* tape = vars.begin()->tape;
  for (const Var& v : vars) {
    if (v.tape == nullptr || v.tape != tape || !tape->owns(v)) {
      fail(ErrorKind::kInvalidArgument, std::string(op) + ": operand is not a node of this tape");
    }
  }
  return *tape;
}

[[noreturn]] void shape_error(const Tape& tape, const char* op, const std::string& detail) {
  fail(ErrorKind::kShape, std::string(op) + " (node " + std::to_string(tape.size()) + "): " + detail);
}

void require_rank(const Tape& tape, const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(tape, op, "expected rank " + std::to_string(rank) + ", got shape " +
                              shape_to_string(t.shape()));
  }
}

void accumulate(const Tape& tape, std::vector<Tensor>& grads, std::size_t id,
                const std::vector<double>& delta) {
  if (!tape.node(id).requires_grad) return;
  auto& g = grads[id].raw();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

const Tensor& Var::value() const {
  if (tape == nullptr) fail(ErrorKind::kInvalidArgument, "detached variable");
  return tape->node(id).value;
}

Var Tape::constant(Tensor value, std::string op) {
  return record(std::move(op), std::move(value), {}, {});
}

std::vector<Var> Tape::bind(const ParameterSet& params) {
  if (bound_) fail(ErrorKind::kInvalidArgument, "tape already has bound parameters");
  bound_ = true;
  layout_ = params.zeros_like();
  std::vector<Var> vars;
  vars.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) {
    Var v = record("param:" + params.entry(i).name, params.tensor(i), {}, {});
    nodes_[v.id].requires_grad = true;
    nodes_[v.id].param_index = static_cast<int>(i);
    vars.push_back(v);
  }
  return vars;
}

Var Tape::record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) fail(ErrorKind::kInvalidArgument, node.op + ": input precedes no node");
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  node.inputs = std::move(inputs);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

ParameterSet backward(const Tape& tape, Var output) {
  if (output.tape != &tape || !tape.owns(output)) {
    fail(ErrorKind::kInvalidArgument, "backward: output node is detached from this tape");
  }
  const Tensor& out = tape.node(output.id).value;
  if (out.rank() != 0) {
    fail(ErrorKind::kShape, "backward: output must be a scalar, got shape " + shape_to_string(out.shape()));
  }
  ++g_backward_passes;

  ParameterSet grad = tape.bound_parameters().zeros_like();
  if (!tape.node(output.id).requires_grad) return grad;

  std::vector<Tensor> grads(tape.size());
  for (std::size_t i = 0; i <= output.id; ++i) {
    if (tape.node(i).requires_grad) grads[i] = Tensor::zeros(tape.node(i).value.shape());
  }
  grads[output.id][0] = 1.0;

  for (std::size_t i = output.id + 1; i-- > 0;) {
    const auto& node = tape.node(i);
    if (!node.requires_grad) continue;
    if (node.param_index >= 0) {
      grad.tensor(static_cast<std::size_t>(node.param_index)) = grads[i];
      continue;
    }
    if (node.backward) node.backward(tape, i, grads);
  }
  return grad;
}

std::uint64_t backward_pass_count() { return g_backward_passes; }

ParameterSet finite_diff_gradient(const std::function<double(const ParameterSet&)>& f,
                                  const ParameterSet& params, double h) {
  if (!(h > 0.0)) fail(ErrorKind::kInvalidArgument, "finite_diff_gradient: step must be positive");
  std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size());
  ParameterSet probe = params;
  for (std::size_t j = 0; j < flat.size(); ++j) {
    const double saved = flat[j];
    flat[j] = saved + h;
    probe.assign(flat);
    const double up = f(probe);
    flat[j] = saved - h;
    probe.assign(flat);
    const double down = f(probe);
    flat[j] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorKind::kNumeric, "finite_diff_gradient: non-finite function value at coordinate " +
                                    std::to_string(j));
    }
    grad[j] = (up - down) / (2.0 * h);
  }
  return params.unflatten(grad);
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape({a, b}, "matmul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank(tape, "matmul", x, 2);
  require_rank(tape, "matmul", y, 2);
  if (x.cols() != y.rows()) {
    shape_error(tape, "matmul", "inner dimensions differ: " + shape_to_string(x.shape()) + " x " +
                                    shape_to_string(y.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += xv * y.at(p, j);
    }
  }
  return tape.record("matmul", std::move(out), {a.id, b.id},
                     [m, k, n](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const auto& node = t.node(self);
                       const std::size_t ia = node.inputs[0], ib = node.inputs[1];
                       const Tensor& g = grads[self];
                       const Tensor& xv = t.node(ia).value;
                       const Tensor& yv = t.node(ib).value;
                       if (t.node(ia).requires_grad) {
                         Tensor& ga = grads[ia];
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * yv.at(p, j);
                             ga.at(i, p) += acc;
                           }
                       }
                       if (t.node(ib).requires_grad) {
                         Tensor& gb = grads[ib];
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double xip = xv.at(i, p);
                             for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += xip * g.at(i, j);
                           }
                       }
                     });
}

Var transpose(Var a) {
  Tape& tape = same_tape({a}, "transpose");
  const Tensor& x = a.value();
  require_rank(tape, "transpose", x, 2);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
  return tape.record("transpose", std::move(out), {a.id},
                     [m, n](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const Tensor& g = grads[self];
                       Tensor& ga = grads[ia];
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
                     });
}

Var add_bias(Var a, Var bias) {
  Tape& tape = same_tape({a, bias}, "add_bias");
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  require_rank(tape, "add_bias", x, 2);
  require_rank(tape, "add_bias", b, 1);
  if (b.dim(0) != x.cols()) {
    shape_error(tape, "add_bias", "bias " + shape_to_string(b.shape()) + " does not match columns of " +
                                      shape_to_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += b[j];
  return tape.record("add_bias", std::move(out), {a.id, bias.id},
                     [m, n](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const auto& node = t.node(self);
                       const Tensor& g = grads[self];
                       accumulate(t, grads, node.inputs[0], g.raw());
                       if (t.node(node.inputs[1]).requires_grad) {
                         Tensor& gb = grads[node.inputs[1]];
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
                       }
                     });
}

namespace {

Var elementwise(Var a, Var b, const char* op, double sign_b, bool multiply) {
  Tape& tape = same_tape({a, b}, op);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    shape_error(tape, op, "operand shapes differ: " + shape_to_string(x.shape()) + " vs " +
                              shape_to_string(y.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = multiply ? x[i] * y[i] : x[i] + sign_b * y[i];
  return tape.record(op, std::move(out), {a.id, b.id},
                     [sign_b, multiply](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const auto& node = t.node(self);
                       const std::size_t ia = node.inputs[0], ib = node.inputs[1];
                       const Tensor& g = grads[self];
                       const Tensor& xv = t.node(ia).value;
                       const Tensor& yv = t.node(ib).value;
                       if (t.node(ia).requires_grad) {
                         Tensor& ga = grads[ia];
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += multiply ? g[i] * yv[i] : g[i];
                       }
                       if (t.node(ib).requires_grad) {
                         Tensor& gb = grads[ib];
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gb[i] += multiply ? g[i] * xv[i] : sign_b * g[i];
                       }
                     });
}

}  // namespace

Var add(Var a, Var b) { return elementwise(a, b, "add", 1.0, false); }
Var sub(Var a, Var b) { return elementwise(a, b, "sub", -1.0, false); }
Var mul(Var a, Var b) { return elementwise(a, b, "mul", 1.0, true); }

Var scale(Var a, double c) {
  Tape& tape = same_tape({a}, "scale");
  Tensor out = a.value();
  for (double& v : out.raw()) v *= c;
  return tape.record("scale", std::move(out), {a.id},
                     [c](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const Tensor& g = grads[self];
                       Tensor& ga = grads[ia];
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                     });
}

Var add_scalar(Var a, double c) {
  Tape& tape = same_tape({a}, "add_scalar");
  Tensor out = a.value();
  for (double& v : out.raw()) v += c;
  return tape.record("add_scalar", std::move(out), {a.id},
                     [](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       accumulate(t, grads, t.node(self).inputs[0], grads[self].raw());
                     });
}

Var relu(Var a) {
  Tape& tape = same_tape({a}, "relu");
  Tensor out = a.value();
  for (double& v : out.raw()) v = v > 0.0 ? v : 0.0;
  return tape.record("relu", std::move(out), {a.id},
                     [](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const Tensor& x = t.node(ia).value;
                       const Tensor& g = grads[self];
                       Tensor& ga = grads[ia];
                       // Subgradient at 0 is 0.
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
                     });
}

Var log_softmax(Var a) {
  Tape& tape = same_tape({a}, "log_softmax");
  const Tensor& x = a.value();
  require_rank(tape, "log_softmax", x, 2);
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) shape_error(tape, "log_softmax", "zero columns");
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, x.at(i, j));
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += std::exp(x.at(i, j) - hi);
    const double lse = hi + std::log(acc);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) - lse;
  }
  return tape.record("log_softmax", std::move(out), {a.id},
                     [m, n](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const Tensor& y = t.node(self).value;
                       const Tensor& g = grads[self];
                       Tensor& ga = grads[ia];
                       for (std::size_t i = 0; i < m; ++i) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < n; ++j) gs += g.at(i, j);
                         for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
                       }
                     });
}

Var gather(Var a, std::span<const int> labels) {
  Tape& tape = same_tape({a}, "gather");
  const Tensor& x = a.value();
  require_rank(tape, "gather", x, 2);
  if (labels.size() != x.rows()) {
    shape_error(tape, "gather", std::to_string(labels.size()) + " labels for " + std::to_string(x.rows()) +
                                    " rows");
  }
  std::vector<int> idx(labels.begin(), labels.end());
  Tensor out({x.rows()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= x.cols()) {
      shape_error(tape, "gather", "label " + std::to_string(idx[i]) + " out of range [0," +
                                      std::to_string(x.cols()) + ")");
    }
    out[i] = x.at(i, static_cast<std::size_t>(idx[i]));
  }
  return tape.record("gather", std::move(out), {a.id},
                     [idx = std::move(idx)](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const Tensor& g = grads[self];
                       Tensor& ga = grads[ia];
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         ga.at(i, static_cast<std::size_t>(idx[i])) += g[i];
                       }
                     });
}

Var row_normalize(Var a, double eps) {
  Tape& tape = same_tape({a}, "row_normalize");
  const Tensor& x = a.value();
  require_rank(tape, "row_normalize", x, 2);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({m, n});
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += x.at(i, j) * x.at(i, j);
    norms[i] = std::sqrt(ss);
    const double d = std::max(norms[i], eps);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) / d;
  }
  return tape.record("row_normalize", std::move(out), {a.id},
                     [m, n, eps, norms = std::move(norms)](const Tape& t, std::size_t self,
                                                           std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const Tensor& y = t.node(self).value;
                       const Tensor& g = grads[self];
                       Tensor& ga = grads[ia];
                       for (std::size_t i = 0; i < m; ++i) {
                         if (norms[i] <= eps) {
                           for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j) / eps;
                           continue;
                         }
                         double yg = 0.0;
                         for (std::size_t j = 0; j < n; ++j) yg += y.at(i, j) * g.at(i, j);
                         for (std::size_t j = 0; j < n; ++j) {
                           ga.at(i, j) += (g.at(i, j) - y.at(i, j) * yg) / norms[i];
                         }
                       }
                     });
}

Var sum(Var a) {
  Tape& tape = same_tape({a}, "sum");
  double acc = 0.0;
  for (double v : a.value().raw()) acc += v;
  return tape.record("sum", Tensor::scalar(acc), {a.id},
                     [](const Tape& t, std::size_t self, std::vector<Tensor>& grads) {
                       const std::size_t ia = t.node(self).inputs[0];
                       if (!t.node(ia).requires_grad) return;
                       const double g = grads[self][0];
                       for (double& v : grads[ia].raw()) v += g;
                     });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) fail(ErrorKind::kShape, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

}  // namespace sharplab
