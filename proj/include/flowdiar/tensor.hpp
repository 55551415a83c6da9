// Copyright (c) 2026 FlowDiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLOWDIAR_TENSOR_HPP_
#define FLOWDIAR_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowdiar/rng.hpp"

namespace flowdiar {
namespace num {

// Minimal reverse-mode tensor engine. Double precision throughout, row-major
// storage, at most 3 dimensions (conv weights). Ops are pure functions of
// their inputs; a single training thread owns gradient accumulation.

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same size as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // empty for leaves

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor rand_uniform(std::vector<int> shape, Rng& rng, double lo,
                             double hi, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return node_->numel(); }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad();
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();

  double item() const;

  // Runs reverse-mode accumulation from this scalar.
  void backward();

  // Value copy detached from the graph.
  Tensor detach() const;

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// A named trainable tensor; names are unique within a model and used for
// checkpointing. `trainable` gates optimizer updates (stage freezing).
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};
using ParamList = std::vector<Parameter>;

// While alive on a thread, ops on that thread do not record the graph.
bool grad_mode_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- elementwise / linear algebra ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// (N,d) + (d,) broadcast over rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
// (C,T) + (C,) broadcast over time, for conv biases.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
// (d,) replicated into (n,d).
Tensor broadcast_rows(const Tensor& v, int n);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- activations / normalization ----
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// Normalizes over the last axis; x may be (d,) or (N,d).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// Normalizes over the row axis per feature; scale/shift are (d,) tensors that
// may carry gradients. Row-permutation invariant statistics.
Tensor adain(const Tensor& x, const Tensor& scale, const Tensor& shift,
             double eps = 1e-5);

// ---- convolutions ----
// x: (C_in, T), w: (C_out, C_in, K) -> (C_out, T') with
// T' = floor((T + 2p - K) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, int stride, int padding);
// x: (C_in, T), w: (C_in, C_out, K) -> (C_out, T') with
// T' = (T - 1) * stride - 2p + K + output_padding. Adjoint of conv1d when
// given the matching conv's weights with the first two axes swapped.
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, int stride,
                        int padding, int output_padding);
// x: (T, d) rows over time, w: (d, K); per-feature convolution over time,
// stride 1, output length T + 2p - K + 1.
Tensor depthwise_conv_time(const Tensor& x, const Tensor& w, int padding);

// ---- shape ----
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor flatten(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int start, int len);

// ---- reductions / losses ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over all elements of (a - b)^2.
Tensor mse(const Tensor& a, const Tensor& b);
// Sum over elements of -y log p - (1-y) log(1-p) with p clamped to
// [clamp_eps, 1 - clamp_eps]; no gradient flows to the target.
Tensor bce_sum(const Tensor& prediction, const Tensor& target,
               double clamp_eps = 1e-7);

// ---- attention ----
// q: (Nq, d), k: (Nk, d), v: (Nk, dv) -> (Nq, dv), softmax(q kT / sqrt(d)) v.
// With order_invariant_sums the softmax denominator and the value reductions
// accumulate in sorted order, so permuting key/value rows permutes nothing
// in the output bits.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 bool order_invariant_sums = false);
// The softmax weights of the same computation, detached from the graph.
Tensor attention_weights(const Tensor& q, const Tensor& k);

// Sum of buf in value-sorted order; result independent of input ordering.
double order_invariant_sum(std::vector<double>& buf);

// ---- finite-difference verification ----
// Runs fn once for the analytic gradients, then compares the analytic
// directional derivative against a central difference along random +-1
// directions (probes_per_tensor of them for each input). Every coordinate
// participates in each probe, and the comparison happens at gradient-norm
// scale, which keeps the check conditioned for deep compositions. Returns
// the max of |analytic - fd| / max(|analytic|, |fd|, 1e-12); +inf when
// anything is non-finite. epsilon must lie in [1e-7, 1e-4].
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                  std::vector<Tensor>& inputs, double epsilon,
                  int probes_per_tensor, Rng& rng);

}  // namespace num
}  // namespace flowdiar

#endif  // FLOWDIAR_TENSOR_HPP_
