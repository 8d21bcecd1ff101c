#include "vinet/nn/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "vinet/bayes.hpp"
#include "vinet/kernels.hpp"

namespace vinet::nn {

Value Tape::constant(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.tracked = false;
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::param(Tensor& t) {
  auto it = bindings_.find(&t);
  if (it != bindings_.end()) return Value{it->second};
  Node n;
  n.value = t;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  bindings_.emplace(&t, id);
  return Value{id};
}

Value Tape::make_node(Tensor value, std::vector<Value> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  bool any_tracked = false;
  for (Value p : parents) {
    if (!p.valid() || p.id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("Tape: invalid parent value");
    n.parents.push_back(p.id);
    any_tracked = any_tracked || nodes_[p.id].tracked;
  }
  n.tracked = any_tracked;
  if (any_tracked) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_ref(int id) {
  Node& n = nodes_.at(id);
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Value v) const {
  const Node& n = nodes_.at(v.id);
  static const Tensor empty;
  if (!n.grad_alloc) {
    // zero gradient of the right shape
    const_cast<Node&>(n).grad = Tensor(n.value.shape);
    const_cast<Node&>(n).grad_alloc = true;
  }
  return n.grad;
}

Tensor Tape::grad_of(const Tensor& t) const {
  auto it = bindings_.find(&t);
  if (it == bindings_.end()) return Tensor(t.shape);  // untouched parameter
  return grad(Value{it->second});
}

void Tape::accumulate(Value v, const Tensor& g) {
  Tensor& dst = grad_ref(v.id);
  if (!dst.same_shape(g)) throw std::logic_error("Tape: gradient shape mismatch");
  kernels::axpy(1.0, g.data.data(), dst.data.data(), dst.data.size());
}

void Tape::backward(Value loss) {
  if (ran_backward_) throw std::logic_error("Tape: backward already ran");
  ran_backward_ = true;
  const Node& ln = nodes_.at(loss.id);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("Tape::backward: loss must be scalar");
  grad_ref(loss.id).data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.tracked || !n.backward || !n.grad_alloc) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

namespace {
void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": operand shapes differ");
}
} // namespace

Value add(Tape& t, Value a, Value b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same(va, vb, "add");
  Tensor out(va.shape);
  kernels::add(va.data.data(), vb.data.data(), out.data.data(), out.numel());
  return t.make_node(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Value sub(Tape& t, Value a, Value b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same(va, vb, "sub");
  Tensor out(va.shape);
  kernels::sub(va.data.data(), vb.data.data(), out.data.data(), out.numel());
  return t.make_node(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    Tensor ng(g.shape);
    kernels::axpy(-1.0, g.data.data(), ng.data.data(), g.numel());
    tp.accumulate(b, ng);
  });
}

Value mul(Tape& t, Value a, Value b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same(va, vb, "mul");
  Tensor out(va.shape);
  kernels::mul(va.data.data(), vb.data.data(), out.data.data(), out.numel());
  return t.make_node(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape), gb(g.shape);
    kernels::mul(g.data.data(), tp.value(b).data.data(), ga.data.data(), g.numel());
    kernels::mul(g.data.data(), tp.value(a).data.data(), gb.data.data(), g.numel());
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Value div(Tape& t, Value a, Value b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same(va, vb, "div");
  Tensor out(va.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] / vb[i];
  return t.make_node(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    const Tensor& xa = tp.value(a);
    const Tensor& xb = tp.value(b);
    Tensor ga(g.shape), gb(g.shape);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] = g[i] / xb[i];
      gb[i] = -g[i] * xa[i] / (xb[i] * xb[i]);
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Value scale(Tape& t, Value a, double c) {
  Tensor out = t.value(a);
  kernels::scal(c, out.data.data(), out.numel());
  return t.make_node(std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    kernels::scal(c, ga.data.data(), ga.numel());
    tp.accumulate(a, ga);
  });
}

Value add_scalar(Tape& t, Value a, double c) {
  Tensor out = t.value(a);
  for (double& v : out.data) v += c;
  return t.make_node(std::move(out), {a},
                     [a](Tape& tp, const Tensor& g) { tp.accumulate(a, g); });
}

Value neg(Tape& t, Value a) { return scale(t, a, -1.0); }

Value map_unary(Tape& t, Value a, double (*f)(double), double (*df)(double)) {
  const Tensor& va = t.value(a);
  Tensor out(va.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(va[i]);
  return t.make_node(std::move(out), {a}, [a, df](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(g.shape);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * df(x[i]);
    tp.accumulate(a, ga);
  });
}

namespace {
double relu_f(double x) { return x > 0.0 ? x : 0.0; }
double relu_df(double x) { return x > 0.0 ? 1.0 : 0.0; }
double softplus_f(double x) {
  // max(x,0) + log1p(exp(-|x|)), stable at both tails
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}
double sigmoid_f(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double sigmoid_df(double x) {
  const double s = sigmoid_f(x);
  return s * (1.0 - s);
}
double log_f(double x) { return std::log(x); }
double log_df(double x) { return 1.0 / x; }
double square_f(double x) { return x * x; }
double square_df(double x) { return 2.0 * x; }
double digamma_f(double x) { return bayes::digamma(x); }
double trigamma_f(double x) { return bayes::trigamma(x); }
double lgamma_f(double x) { return bayes::log_gamma(x); }
} // namespace

Value relu(Tape& t, Value a) { return map_unary(t, a, relu_f, relu_df); }
Value softplus(Tape& t, Value a) { return map_unary(t, a, softplus_f, sigmoid_f); }
Value sigmoid(Tape& t, Value a) { return map_unary(t, a, sigmoid_f, sigmoid_df); }
Value log_v(Tape& t, Value a) { return map_unary(t, a, log_f, log_df); }
Value square(Tape& t, Value a) { return map_unary(t, a, square_f, square_df); }
Value digamma_v(Tape& t, Value a) { return map_unary(t, a, digamma_f, trigamma_f); }
Value log_gamma_v(Tape& t, Value a) { return map_unary(t, a, lgamma_f, digamma_f); }

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Value sum(Tape& t, Value a) {
  const Tensor& va = t.value(a);
  Tensor out = Tensor::scalar(kernels::sum(va.data.data(), va.numel()));
  return t.make_node(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor ga = Tensor::full(tp.value(a).shape, g[0]);
    tp.accumulate(a, ga);
  });
}

Value mean(Tape& t, Value a) {
  const std::size_t n = t.value(a).numel();
  return scale(t, sum(t, a), 1.0 / static_cast<double>(n));
}

Value dot(Tape& t, Value a, Value b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same(va, vb, "dot");
  Tensor out = Tensor::scalar(kernels::dot(va.data.data(), vb.data.data(), va.numel()));
  return t.make_node(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    Tensor ga = tp.value(b);
    kernels::scal(g[0], ga.data.data(), ga.numel());
    Tensor gb = tp.value(a);
    kernels::scal(g[0], gb.data.data(), gb.numel());
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Value weighted_dot(Tape& t, Value a, Value b, std::vector<double> w) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same(va, vb, "weighted_dot");
  if (w.size() != va.numel()) throw std::invalid_argument("weighted_dot: weight size");
  Tensor out =
      Tensor::scalar(kernels::wdot(w.data(), va.data.data(), vb.data.data(), va.numel()));
  auto wp = std::make_shared<std::vector<double>>(std::move(w));
  return t.make_node(std::move(out), {a, b}, [a, b, wp](Tape& tp, const Tensor& g) {
    const Tensor& xa = tp.value(a);
    const Tensor& xb = tp.value(b);
    Tensor ga(xa.shape), gb(xb.shape);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      ga[i] = g[0] * (*wp)[i] * xb[i];
      gb[i] = g[0] * (*wp)[i] * xa[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Value mse(Tape& t, Value a, Value b) {
  Value d = sub(t, a, b);
  return mean(t, square(t, d));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Value reshape(Tape& t, Value a, std::vector<int> shape) {
  const Tensor& va = t.value(a);
  if (Tensor::count(shape) != va.numel()) throw std::invalid_argument("reshape: size mismatch");
  Tensor out(shape, va.data);
  return t.make_node(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, Tensor(tp.value(a).shape, g.data));
  });
}

Value concat_channels(Tape& t, const std::vector<Value>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
  const Tensor& first = t.value(xs[0]);
  if (first.rank() != 3) throw std::invalid_argument("concat_channels: expect (C,H,W)");
  const int H = first.dim(1), W = first.dim(2);
  int C = 0;
  for (Value v : xs) {
    const Tensor& x = t.value(v);
    if (x.rank() != 3 || x.dim(1) != H || x.dim(2) != W)
      throw std::invalid_argument("concat_channels: spatial shape mismatch");
    C += x.dim(0);
  }
  Tensor out({C, H, W});
  std::size_t off = 0;
  for (Value v : xs) {
    const Tensor& x = t.value(v);
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + off);
    off += x.numel();
  }
  std::vector<Value> parents = xs;
  return t.make_node(std::move(out), parents, [parents](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (Value v : parents) {
      const Tensor& x = tp.value(v);
      Tensor gx(x.shape);
      std::copy(g.data.begin() + off, g.data.begin() + off + x.numel(), gx.data.begin());
      tp.accumulate(v, gx);
      off += x.numel();
    }
  });
}

Value slice_channels(Tape& t, Value a, int from, int count) {
  const Tensor& va = t.value(a);
  if (va.rank() != 3) throw std::invalid_argument("slice_channels: expect (C,H,W)");
  if (from < 0 || count < 1 || from + count > va.dim(0))
    throw std::invalid_argument("slice_channels: out of range");
  const int H = va.dim(1), W = va.dim(2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out({count, H, W});
  std::copy(va.data.begin() + from * plane, va.data.begin() + (from + count) * plane,
            out.data.begin());
  return t.make_node(std::move(out), {a}, [a, from, plane](Tape& tp, const Tensor& g) {
    Tensor ga(tp.value(a).shape);
    std::copy(g.data.begin(), g.data.end(), ga.data.begin() + from * plane);
    tp.accumulate(a, ga);
  });
}

Value slice_flat(Tape& t, Value a, std::size_t from, std::size_t count) {
  const Tensor& va = t.value(a);
  if (from + count > va.numel()) throw std::invalid_argument("slice_flat: out of range");
  Tensor out({static_cast<int>(count)});
  std::copy(va.data.begin() + from, va.data.begin() + from + count, out.data.begin());
  return t.make_node(std::move(out), {a}, [a, from, count](Tape& tp, const Tensor& g) {
    Tensor ga(tp.value(a).shape);
    std::copy(g.data.begin(), g.data.end(), ga.data.begin() + from);
    tp.accumulate(a, ga);
  });
}

} // namespace vinet::nn
