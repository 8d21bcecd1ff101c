#pragma once

// Reverse-mode gradient tape over dense double tensors. Nodes are created in
// evaluation order; backward() walks them in reverse, accumulating gradients
// additively across fan-out. Parameter tensors are bound by address, so the
// same Tensor bound twice resolves to one node and shares its gradient.

#include <functional>
#include <unordered_map>
#include <vector>

#include "vinet/nn/tensor.hpp"

namespace vinet::nn {

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Value constant(Tensor v);             // no gradient tracking
  Value param(Tensor& t);               // tracked leaf bound by address
  Value make_node(Tensor value, std::vector<Value> parents, BackwardFn fn);

  const Tensor& value(Value v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Value v) const;
  // Gradient of a bound parameter after backward(); zeros if never bound.
  Tensor grad_of(const Tensor& t) const;

  void accumulate(Value v, const Tensor& g);

  // loss must be scalar (numel 1); runs the reverse sweep once.
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand
    std::vector<int> parents;
    BackwardFn backward;
    bool tracked = true;
    bool grad_alloc = false;
  };
  Tensor& grad_ref(int id);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> bindings_;
  bool ran_backward_ = false;
};

// --- elementwise / arithmetic -------------------------------------------------

Value add(Tape& t, Value a, Value b);
Value sub(Tape& t, Value a, Value b);
Value mul(Tape& t, Value a, Value b);
Value div(Tape& t, Value a, Value b);
Value scale(Tape& t, Value a, double c);
Value add_scalar(Tape& t, Value a, double c);
Value neg(Tape& t, Value a);

// pointwise map with derivative
Value map_unary(Tape& t, Value a, double (*f)(double), double (*df)(double));
Value relu(Tape& t, Value a);
Value softplus(Tape& t, Value a);
Value sigmoid(Tape& t, Value a);
Value log_v(Tape& t, Value a);
Value square(Tape& t, Value a);
Value digamma_v(Tape& t, Value a);   // derivative: trigamma
Value log_gamma_v(Tape& t, Value a); // derivative: digamma

// --- reductions ----------------------------------------------------------------

Value sum(Tape& t, Value a);
Value mean(Tape& t, Value a);
Value dot(Tape& t, Value a, Value b);
// sum_i w_i x_i y_i with a fixed weight vector
Value weighted_dot(Tape& t, Value a, Value b, std::vector<double> w);
Value mse(Tape& t, Value a, Value b);

// --- shape ops -------------------------------------------------------------------

Value reshape(Tape& t, Value a, std::vector<int> shape);
Value concat_channels(Tape& t, const std::vector<Value>& xs);  // (C_i,H,W) -> (sum C_i,H,W)
Value slice_channels(Tape& t, Value a, int from, int count);
// contiguous slice of the flattened tensor
Value slice_flat(Tape& t, Value a, std::size_t from, std::size_t count);

// --- structured layers (inputs shaped (C,H,W)) ----------------------------------

// 3x3 (k odd) valid convolution after reflect padding of (k-1)/2.
Value conv2d_reflect(Tape& t, Value x, Value weight, Value bias);
// channel mixing: out[c'] = sum_c W[c',c] x[c] + b[c']
Value channel_linear(Tape& t, Value x, Value weight, Value bias);
// dense y = W x + b on flat vectors
Value linear(Tape& t, Value x, Value weight, Value bias);
Value avgpool2(Tape& t, Value x);
Value upsample2(Tape& t, Value x);

// --- FFT family ------------------------------------------------------------------

// (C,H,W) real -> (C,H,W/2+1,2) interleaved complex, unnormalized forward DFT.
Value rfft2(Tape& t, Value x);
// inverse of rfft2 (normalized by 1/(H*W)): (C,H,Wh,2) -> (C,H,W); W given
// explicitly since Wh does not determine its parity.
Value irfft2(Tape& t, Value x, int w_full);
// Keep the lowest `modes` frequencies per axis and apply complex channel
// mixing weights w1 (rows 0..m-1) and w2 (rows H-m..H-1), each shaped
// (Cout,Cin,m,m,2). Output (Cout,H,Wh,2).
Value spectral_mul(Tape& t, Value x, Value w1, Value w2, int modes);

} // namespace vinet::nn
