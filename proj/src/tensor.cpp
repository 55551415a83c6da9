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

#include "flowdiar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "flowdiar/errors.hpp"

namespace flowdiar {
namespace num {

namespace {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw Error(ErrorCategory::kShape, "non-positive dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a,
                              const Tensor& b) {
  throw Error(ErrorCategory::kShape, op + ": incompatible shapes " +
                                         shape_str(a.shape()) + " vs " +
                                         shape_str(b.shape()));
}

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_node(std::vector<int> shape,
                                std::vector<double> value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (static_cast<std::int64_t>(n->value.size()) != shape_numel(n->shape)) {
    throw Error(ErrorCategory::kShape, "value count does not match shape");
  }
  return n;
}

// Builds the output node of an op: requires_grad if any parent does, and in
// that case wires the backward closure and keeps the parents alive.
Tensor op_node(std::vector<int> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward) {
  auto n = make_node(std::move(shape), std::move(value));
  bool rg = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  if (rg) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor(n);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---------------------------------------------------------------- creation

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::int64_t n = shape_numel(shape);
  auto node = make_node(std::move(shape),
                        std::vector<double>(static_cast<std::size_t>(n), 0.0));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  std::int64_t n = shape_numel(shape);
  auto node = make_node(
      std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values,
                    bool requires_grad) {
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  std::int64_t n = shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = stddev * rng.gaussian();
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::rand_uniform(std::vector<int> shape, Rng& rng, double lo,
                            double hi, bool requires_grad) {
  std::int64_t n = shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(v), requires_grad);
}

std::vector<double>& Tensor::grad() {
  if (!node_->requires_grad) {
    throw Error(ErrorCategory::kInternal, "grad() on a non-grad tensor");
  }
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) {
    node_->grad.assign(node_->value.size(), 0.0);
  }
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorCategory::kShape, "item() on a non-scalar tensor");
  }
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor::from(node_->shape, node_->value, false);
}

void Tensor::backward() {
  if (numel() != 1) {
    throw Error(ErrorCategory::kShape, "backward() requires a scalar output");
  }
  if (!node_->requires_grad) return;

  // Iterative DFS post-order; reverse gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return op_node(a.shape(), std::move(out), {a, b}, [](Node& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return op_node(a.shape(), std::move(out), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  std::vector<double> av = a.values();
  std::vector<double> bvc = b.values();
  return op_node(a.shape(), std::move(out), {a, b},
                 [av = std::move(av), bvc = std::move(bvc)](Node& n) {
                   auto& pa = n.parents[0];
                   auto& pb = n.parents[1];
                   if (pa->requires_grad) {
                     pa->ensure_grad();
                     for (std::size_t i = 0; i < n.grad.size(); ++i)
                       pa->grad[i] += n.grad[i] * bvc[i];
                   }
                   if (pb->requires_grad) {
                     pb->ensure_grad();
                     for (std::size_t i = 0; i < n.grad.size(); ++i)
                       pb->grad[i] += n.grad[i] * av[i];
                   }
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& x : out) x *= c;
  return op_node(a.shape(), std::move(out), {a}, [c](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += c * n.grad[i];
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.dim(1) != v.dim(0)) {
    shape_error("add_rowvec", m, v);
  }
  int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.values());
  const auto& vv = v.values();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] += vv[c];
  return op_node(m.shape(), std::move(out), {m, v}, [rows, cols](Node& n) {
    auto& pm = n.parents[0];
    auto& pv = n.parents[1];
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pm->grad[i] += n.grad[i];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          pv->grad[c] += n.grad[static_cast<std::size_t>(r) * cols + c];
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(0) != b.dim(0)) {
    shape_error("add_channel_bias", x, b);
  }
  int channels = x.dim(0), time = x.dim(1);
  std::vector<double> out(x.values());
  const auto& bb = b.values();
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < time; ++t)
      out[static_cast<std::size_t>(c) * time + t] += bb[c];
  return op_node(x.shape(), std::move(out), {x, b}, [channels, time](Node& n) {
    auto& px = n.parents[0];
    auto& pb = n.parents[1];
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int c = 0; c < channels; ++c)
        for (int t = 0; t < time; ++t)
          pb->grad[c] += n.grad[static_cast<std::size_t>(c) * time + t];
    }
  });
}

Tensor broadcast_rows(const Tensor& v, int n_rows) {
  if (v.ndim() != 1) {
    throw Error(ErrorCategory::kShape, "broadcast_rows expects a vector");
  }
  int d = v.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n_rows) * d);
  for (int r = 0; r < n_rows; ++r)
    std::copy(v.values().begin(), v.values().end(),
              out.begin() + static_cast<std::size_t>(r) * d);
  return op_node({n_rows, d}, std::move(out), {v}, [n_rows, d](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < n_rows; ++r)
      for (int c = 0; c < d; ++c)
        p->grad[c] += n.grad[static_cast<std::size_t>(r) * d + c];
  });
}

// ------------------------------------------------------------------ matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a, b);
  }
  int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * m;
    const double* arow = av + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      double aik = arow[kk];
      const double* brow = bv + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  std::vector<double> ac = a.values();
  std::vector<double> bc = b.values();
  return op_node(
      {n, m}, std::move(out), {a, b},
      [n, k, m, ac = std::move(ac), bc = std::move(bc)](Node& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        const double* g = node.grad.data();
        if (pa->requires_grad) {
          pa->ensure_grad();
          double* ga = pa->grad.data();
          // dA = g * B^T
          for (int i = 0; i < n; ++i)
            for (int kk = 0; kk < k; ++kk) {
              double s = 0.0;
              const double* grow = g + static_cast<std::size_t>(i) * m;
              const double* brow = bc.data() + static_cast<std::size_t>(kk) * m;
              for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
              ga[static_cast<std::size_t>(i) * k + kk] += s;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          double* gb = pb->grad.data();
          // dB = A^T * g
          for (int kk = 0; kk < k; ++kk) {
            double* gbrow = gb + static_cast<std::size_t>(kk) * m;
            for (int i = 0; i < n; ++i) {
              double aik = ac[static_cast<std::size_t>(i) * k + kk];
              const double* grow = g + static_cast<std::size_t>(i) * m;
              for (int j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) {
    throw Error(ErrorCategory::kShape, "transpose expects a matrix");
  }
  int n = a.dim(0), m = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  const auto& av = a.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out[static_cast<std::size_t>(j) * n + i] =
          av[static_cast<std::size_t>(i) * m + j];
  return op_node({m, n}, std::move(out), {a}, [n, m](Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        p->grad[static_cast<std::size_t>(i) * m + j] +=
            node.grad[static_cast<std::size_t>(j) * n + i];
  });
}

// ------------------------------------------------------------- activations

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.values().size());
  std::vector<double> xs(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xs[i] * stable_sigmoid(xs[i]);
  }
  return op_node(x.shape(), std::move(out), {x}, [xs = std::move(xs)](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      double s = stable_sigmoid(xs[i]);
      p->grad[i] += n.grad[i] * s * (1.0 + xs[i] * (1.0 - s));
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = stable_sigmoid(x.values()[i]);
  std::vector<double> oc = out;
  return op_node(x.shape(), std::move(out), {x}, [oc = std::move(oc)](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] * oc[i] * (1.0 - oc[i]);
  });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.ndim() != 2) {
    throw Error(ErrorCategory::kShape, "softmax_rows expects a matrix");
  }
  int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (int r = 0; r < rows; ++r) {
    const double* in = xv.data() + static_cast<std::size_t>(r) * cols;
    double* o = out.data() + static_cast<std::size_t>(r) * cols;
    double mx = in[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      denom += o[c];
    }
    for (int c = 0; c < cols; ++c) o[c] /= denom;
  }
  std::vector<double> oc = out;
  return op_node(x.shape(), std::move(out), {x},
                 [rows, cols, oc = std::move(oc)](Node& n) {
                   auto& p = n.parents[0];
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   for (int r = 0; r < rows; ++r) {
                     const double* g =
                         n.grad.data() + static_cast<std::size_t>(r) * cols;
                     const double* y =
                         oc.data() + static_cast<std::size_t>(r) * cols;
                     double dot = 0.0;
                     for (int c = 0; c < cols; ++c) dot += g[c] * y[c];
                     double* pg =
                         p->grad.data() + static_cast<std::size_t>(r) * cols;
                     for (int c = 0; c < cols; ++c)
                       pg[c] += y[c] * (g[c] - dot);
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  int rows, cols;
  if (x.ndim() == 1) {
    rows = 1;
    cols = x.dim(0);
  } else if (x.ndim() == 2) {
    rows = x.dim(0);
    cols = x.dim(1);
  } else {
    throw Error(ErrorCategory::kShape, "layer_norm expects 1-D or 2-D input");
  }
  if (gamma.ndim() != 1 || gamma.dim(0) != cols || beta.ndim() != 1 ||
      beta.dim(0) != cols) {
    shape_error("layer_norm affine", x, gamma);
  }
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double* in = xv.data() + static_cast<std::size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += in[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= cols;
    double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = istd;
    double* xh = xhat.data() + static_cast<std::size_t>(r) * cols;
    double* o = out.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      xh[c] = (in[c] - mean) * istd;
      o[c] = gv[c] * xh[c] + bv[c];
    }
  }
  return op_node(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std),
       gv](Node& n) {
        auto& px = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        for (int r = 0; r < rows; ++r) {
          const double* g = n.grad.data() + static_cast<std::size_t>(r) * cols;
          const double* xh = xhat.data() + static_cast<std::size_t>(r) * cols;
          if (pg->requires_grad) {
            pg->ensure_grad();
            for (int c = 0; c < cols; ++c) pg->grad[c] += g[c] * xh[c];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (int c = 0; c < cols; ++c) pb->grad[c] += g[c];
          }
          if (px->requires_grad) {
            px->ensure_grad();
            double mean_gg = 0.0, mean_gx = 0.0;
            for (int c = 0; c < cols; ++c) {
              mean_gg += g[c] * gv[c];
              mean_gx += g[c] * gv[c] * xh[c];
            }
            mean_gg /= cols;
            mean_gx /= cols;
            double istd = inv_std[static_cast<std::size_t>(r)];
            double* pxg = px->grad.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) {
              pxg[c] += istd * (g[c] * gv[c] - mean_gg - xh[c] * mean_gx);
            }
          }
        }
      });
}

double order_invariant_sum(std::vector<double>& buf) {
  std::sort(buf.begin(), buf.end());
  double s = 0.0;
  for (double v : buf) s += v;
  return s;
}

Tensor adain(const Tensor& x, const Tensor& sc, const Tensor& sh, double eps) {
  if (x.ndim() != 2) {
    throw Error(ErrorCategory::kShape, "adain expects a matrix");
  }
  int rows = x.dim(0), cols = x.dim(1);
  if (sc.ndim() != 1 || sc.dim(0) != cols || sh.ndim() != 1 ||
      sh.dim(0) != cols) {
    shape_error("adain affine", x, sc);
  }
  const auto& xv = x.values();
  const auto& scv = sc.values();
  const auto& shv = sh.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(cols));
  std::vector<double> buf(static_cast<std::size_t>(rows));
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r)
      buf[static_cast<std::size_t>(r)] = xv[static_cast<std::size_t>(r) * cols + c];
    std::vector<double> tmp = buf;
    double mean = order_invariant_sum(tmp) / rows;
    for (int r = 0; r < rows; ++r) {
      double d = buf[static_cast<std::size_t>(r)] - mean;
      tmp[static_cast<std::size_t>(r)] = d * d;
    }
    double var = order_invariant_sum(tmp) / rows;
    double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(c)] = istd;
    for (int r = 0; r < rows; ++r) {
      std::size_t i = static_cast<std::size_t>(r) * cols + c;
      xhat[i] = (xv[i] - mean) * istd;
      out[i] = scv[c] * xhat[i] + shv[c];
    }
  }
  return op_node(
      x.shape(), std::move(out), {x, sc, sh},
      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std),
       scv](Node& n) {
        auto& px = n.parents[0];
        auto& psc = n.parents[1];
        auto& psh = n.parents[2];
        for (int c = 0; c < cols; ++c) {
          double g_sum = 0.0, gx_sum = 0.0;
          for (int r = 0; r < rows; ++r) {
            std::size_t i = static_cast<std::size_t>(r) * cols + c;
            g_sum += n.grad[i];
            gx_sum += n.grad[i] * xhat[i];
          }
          if (psc->requires_grad) {
            psc->ensure_grad();
            psc->grad[c] += gx_sum;
          }
          if (psh->requires_grad) {
            psh->ensure_grad();
            psh->grad[c] += g_sum;
          }
          if (px->requires_grad) {
            px->ensure_grad();
            double istd = inv_std[static_cast<std::size_t>(c)];
            double mean_g = g_sum / rows;
            double mean_gx = gx_sum / rows;
            for (int r = 0; r < rows; ++r) {
              std::size_t i = static_cast<std::size_t>(r) * cols + c;
              px->grad[i] +=
                  scv[c] * istd * (n.grad[i] - mean_g - xhat[i] * mean_gx);
            }
          }
        }
      });
}

// ------------------------------------------------------------ convolutions

Tensor conv1d(const Tensor& x, const Tensor& w, int stride, int padding) {
  if (x.ndim() != 2 || w.ndim() != 3) {
    throw Error(ErrorCategory::kShape, "conv1d expects (C_in,T) and (C_out,C_in,K)");
  }
  int c_in = x.dim(0), t_in = x.dim(1);
  int c_out = w.dim(0), w_cin = w.dim(1), k = w.dim(2);
  if (w_cin != c_in) {
    throw Error(ErrorCategory::kShape,
                "conv1d: input has " + std::to_string(c_in) +
                    " channels but weights expect " + std::to_string(w_cin) +
                    " (weights " + shape_str(w.shape()) + ", input " +
                    shape_str(x.shape()) + ")");
  }
  if (stride < 1) throw Error(ErrorCategory::kShape, "conv1d: stride must be >= 1");
  if (padding < 0) throw Error(ErrorCategory::kShape, "conv1d: negative padding");
  if (t_in + 2 * padding < k) {
    throw Error(ErrorCategory::kShape, "conv1d: kernel longer than padded input");
  }
  int t_out = (t_in + 2 * padding - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(c_out) * t_out, 0.0);
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  for (int co = 0; co < c_out; ++co) {
    double* orow = out.data() + static_cast<std::size_t>(co) * t_out;
    for (int ci = 0; ci < c_in; ++ci) {
      const double* xrow = xv + static_cast<std::size_t>(ci) * t_in;
      const double* wrow =
          wv + (static_cast<std::size_t>(co) * c_in + ci) * k;
      for (int kk = 0; kk < k; ++kk) {
        double wk = wrow[kk];
        for (int to = 0; to < t_out; ++to) {
          int ti = to * stride - padding + kk;
          if (ti >= 0 && ti < t_in) orow[to] += wk * xrow[ti];
        }
      }
    }
  }
  std::vector<double> xc = x.values();
  std::vector<double> wc = w.values();
  return op_node(
      {c_out, t_out}, std::move(out), {x, w},
      [c_in, t_in, c_out, k, t_out, stride, padding, xc = std::move(xc),
       wc = std::move(wc)](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        const double* g = n.grad.data();
        if (px->requires_grad) {
          px->ensure_grad();
          double* gx = px->grad.data();
          for (int co = 0; co < c_out; ++co) {
            const double* grow = g + static_cast<std::size_t>(co) * t_out;
            for (int ci = 0; ci < c_in; ++ci) {
              const double* wrow =
                  wc.data() + (static_cast<std::size_t>(co) * c_in + ci) * k;
              double* gxrow = gx + static_cast<std::size_t>(ci) * t_in;
              for (int kk = 0; kk < k; ++kk) {
                double wk = wrow[kk];
                for (int to = 0; to < t_out; ++to) {
                  int ti = to * stride - padding + kk;
                  if (ti >= 0 && ti < t_in) gxrow[ti] += wk * grow[to];
                }
              }
            }
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          double* gw = pw->grad.data();
          for (int co = 0; co < c_out; ++co) {
            const double* grow = g + static_cast<std::size_t>(co) * t_out;
            for (int ci = 0; ci < c_in; ++ci) {
              const double* xrow = xc.data() + static_cast<std::size_t>(ci) * t_in;
              double* gwrow =
                  gw + (static_cast<std::size_t>(co) * c_in + ci) * k;
              for (int kk = 0; kk < k; ++kk) {
                double s = 0.0;
                for (int to = 0; to < t_out; ++to) {
                  int ti = to * stride - padding + kk;
                  if (ti >= 0 && ti < t_in) s += grow[to] * xrow[ti];
                }
                gwrow[kk] += s;
              }
            }
          }
        }
      });
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, int stride,
                        int padding, int output_padding) {
  if (x.ndim() != 2 || w.ndim() != 3) {
    throw Error(ErrorCategory::kShape,
                "conv_transpose1d expects (C_in,T) and (C_in,C_out,K)");
  }
  int c_in = x.dim(0), t_in = x.dim(1);
  int w_cin = w.dim(0), c_out = w.dim(1), k = w.dim(2);
  if (w_cin != c_in) {
    throw Error(ErrorCategory::kShape,
                "conv_transpose1d: input has " + std::to_string(c_in) +
                    " channels but weights expect " + std::to_string(w_cin));
  }
  if (stride < 1) {
    throw Error(ErrorCategory::kShape, "conv_transpose1d: stride must be >= 1");
  }
  if (output_padding < 0 || output_padding >= stride) {
    throw Error(ErrorCategory::kShape,
                "conv_transpose1d: output_padding must lie in [0, stride)");
  }
  int t_out = (t_in - 1) * stride - 2 * padding + k + output_padding;
  if (t_out <= 0) {
    throw Error(ErrorCategory::kShape, "conv_transpose1d: empty output");
  }
  std::vector<double> out(static_cast<std::size_t>(c_out) * t_out, 0.0);
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  for (int ci = 0; ci < c_in; ++ci) {
    const double* xrow = xv + static_cast<std::size_t>(ci) * t_in;
    for (int co = 0; co < c_out; ++co) {
      double* orow = out.data() + static_cast<std::size_t>(co) * t_out;
      const double* wrow =
          wv + (static_cast<std::size_t>(ci) * c_out + co) * k;
      for (int ti = 0; ti < t_in; ++ti) {
        double xval = xrow[ti];
        int base = ti * stride - padding;
        for (int kk = 0; kk < k; ++kk) {
          int to = base + kk;
          if (to >= 0 && to < t_out) orow[to] += xval * wrow[kk];
        }
      }
    }
  }
  std::vector<double> xc = x.values();
  std::vector<double> wc = w.values();
  return op_node(
      {c_out, t_out}, std::move(out), {x, w},
      [c_in, t_in, c_out, k, t_out, stride, padding, xc = std::move(xc),
       wc = std::move(wc)](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        const double* g = n.grad.data();
        if (px->requires_grad) {
          px->ensure_grad();
          double* gx = px->grad.data();
          for (int ci = 0; ci < c_in; ++ci) {
            double* gxrow = gx + static_cast<std::size_t>(ci) * t_in;
            for (int co = 0; co < c_out; ++co) {
              const double* grow = g + static_cast<std::size_t>(co) * t_out;
              const double* wrow =
                  wc.data() + (static_cast<std::size_t>(ci) * c_out + co) * k;
              for (int ti = 0; ti < t_in; ++ti) {
                int base = ti * stride - padding;
                double s = 0.0;
                for (int kk = 0; kk < k; ++kk) {
                  int to = base + kk;
                  if (to >= 0 && to < t_out) s += grow[to] * wrow[kk];
                }
                gxrow[ti] += s;
              }
            }
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          double* gw = pw->grad.data();
          for (int ci = 0; ci < c_in; ++ci) {
            const double* xrow = xc.data() + static_cast<std::size_t>(ci) * t_in;
            for (int co = 0; co < c_out; ++co) {
              const double* grow = g + static_cast<std::size_t>(co) * t_out;
              double* gwrow =
                  gw + (static_cast<std::size_t>(ci) * c_out + co) * k;
              for (int ti = 0; ti < t_in; ++ti) {
                int base = ti * stride - padding;
                for (int kk = 0; kk < k; ++kk) {
                  int to = base + kk;
                  if (to >= 0 && to < t_out)
                    gwrow[kk] += xrow[ti] * grow[to];
                }
              }
            }
          }
        }
      });
}

Tensor depthwise_conv_time(const Tensor& x, const Tensor& w, int padding) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0)) {
    shape_error("depthwise_conv_time", x, w);
  }
  int t_in = x.dim(0), d = x.dim(1), k = w.dim(1);
  if (t_in + 2 * padding < k) {
    throw Error(ErrorCategory::kShape,
                "depthwise_conv_time: kernel longer than padded input");
  }
  int t_out = t_in + 2 * padding - k + 1;
  std::vector<double> out(static_cast<std::size_t>(t_out) * d, 0.0);
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  for (int to = 0; to < t_out; ++to) {
    double* orow = out.data() + static_cast<std::size_t>(to) * d;
    for (int kk = 0; kk < k; ++kk) {
      int ti = to - padding + kk;
      if (ti < 0 || ti >= t_in) continue;
      const double* xrow = xv + static_cast<std::size_t>(ti) * d;
      for (int f = 0; f < d; ++f)
        orow[f] += xrow[f] * wv[static_cast<std::size_t>(f) * k + kk];
    }
  }
  std::vector<double> xc = x.values();
  std::vector<double> wc = w.values();
  return op_node(
      {t_out, d}, std::move(out), {x, w},
      [t_in, d, k, t_out, padding, xc = std::move(xc),
       wc = std::move(wc)](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        const double* g = n.grad.data();
        if (px->requires_grad) {
          px->ensure_grad();
          for (int to = 0; to < t_out; ++to) {
            const double* grow = g + static_cast<std::size_t>(to) * d;
            for (int kk = 0; kk < k; ++kk) {
              int ti = to - padding + kk;
              if (ti < 0 || ti >= t_in) continue;
              double* gxrow = px->grad.data() + static_cast<std::size_t>(ti) * d;
              for (int f = 0; f < d; ++f)
                gxrow[f] += grow[f] * wc[static_cast<std::size_t>(f) * k + kk];
            }
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (int to = 0; to < t_out; ++to) {
            const double* grow = g + static_cast<std::size_t>(to) * d;
            for (int kk = 0; kk < k; ++kk) {
              int ti = to - padding + kk;
              if (ti < 0 || ti >= t_in) continue;
              const double* xrow = xc.data() + static_cast<std::size_t>(ti) * d;
              for (int f = 0; f < d; ++f)
                pw->grad[static_cast<std::size_t>(f) * k + kk] +=
                    grow[f] * xrow[f];
            }
          }
        }
      });
}

// ------------------------------------------------------------------- shape

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.numel()) {
    throw Error(ErrorCategory::kShape,
                "reshape: element count mismatch " + shape_str(x.shape()) +
                    " -> " + shape_str(shape));
  }
  std::vector<double> out(x.values());
  return op_node(std::move(shape), std::move(out), {x}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  });
}

Tensor flatten(const Tensor& x) {
  return reshape(x, {static_cast<int>(x.numel())});
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
    shape_error("concat_cols", a, b);
  }
  int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  int cols = ca + cb;
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + static_cast<std::size_t>(r) * ca, ca,
                out.data() + static_cast<std::size_t>(r) * cols);
    std::copy_n(b.values().data() + static_cast<std::size_t>(r) * cb, cb,
                out.data() + static_cast<std::size_t>(r) * cols + ca);
  }
  return op_node({rows, cols}, std::move(out), {a, b},
                 [rows, ca, cb, cols](Node& n) {
                   auto& pa = n.parents[0];
                   auto& pb = n.parents[1];
                   if (pa->requires_grad) {
                     pa->ensure_grad();
                     for (int r = 0; r < rows; ++r)
                       for (int c = 0; c < ca; ++c)
                         pa->grad[static_cast<std::size_t>(r) * ca + c] +=
                             n.grad[static_cast<std::size_t>(r) * cols + c];
                   }
                   if (pb->requires_grad) {
                     pb->ensure_grad();
                     for (int r = 0; r < rows; ++r)
                       for (int c = 0; c < cb; ++c)
                         pb->grad[static_cast<std::size_t>(r) * cb + c] +=
                             n.grad[static_cast<std::size_t>(r) * cols + ca + c];
                   }
                 });
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  if (x.ndim() != 2 || start < 0 || len <= 0 || start + len > x.dim(1)) {
    throw Error(ErrorCategory::kShape, "slice_cols: range out of bounds");
  }
  int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows) * len);
  for (int r = 0; r < rows; ++r)
    std::copy_n(x.values().data() + static_cast<std::size_t>(r) * cols + start,
                len, out.data() + static_cast<std::size_t>(r) * len);
  return op_node({rows, len}, std::move(out), {x},
                 [rows, cols, start, len](Node& n) {
                   auto& p = n.parents[0];
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   for (int r = 0; r < rows; ++r)
                     for (int c = 0; c < len; ++c)
                       p->grad[static_cast<std::size_t>(r) * cols + start + c] +=
                           n.grad[static_cast<std::size_t>(r) * len + c];
                 });
}

// -------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return op_node({1}, {s}, {x}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += n.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  double inv = 1.0 / static_cast<double>(x.numel());
  return op_node({1}, {s * inv}, {x}, [inv](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += n.grad[0] * inv;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mse", a, b);
  double s = 0.0;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    double d = av[i] - bv[i];
    s += d * d;
  }
  double inv = 1.0 / static_cast<double>(a.numel());
  std::vector<double> ac = av, bc = bv;
  return op_node({1}, {s * inv}, {a, b},
                 [inv, ac = std::move(ac), bc = std::move(bc)](Node& n) {
                   auto& pa = n.parents[0];
                   auto& pb = n.parents[1];
                   for (std::size_t i = 0; i < ac.size(); ++i) {
                     double d = 2.0 * inv * (ac[i] - bc[i]) * n.grad[0];
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       pa->grad[i] += d;
                     }
                     if (pb->requires_grad) {
                       pb->ensure_grad();
                       pb->grad[i] -= d;
                     }
                   }
                 });
}

Tensor bce_sum(const Tensor& prediction, const Tensor& target,
               double clamp_eps) {
  if (prediction.shape() != target.shape()) {
    shape_error("bce_sum", prediction, target);
  }
  const auto& pv = prediction.values();
  const auto& tv = target.values();
  double lo = clamp_eps, hi = 1.0 - clamp_eps;
  double loss = 0.0;
  std::vector<double> dldp(pv.size(), 0.0);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double p = std::min(std::max(pv[i], lo), hi);
    double y = tv[i];
    loss += -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
    if (pv[i] > lo && pv[i] < hi) {
      dldp[i] = -y / p + (1.0 - y) / (1.0 - p);
    }
  }
  return op_node({1}, {loss}, {prediction, target},
                 [dldp = std::move(dldp)](Node& n) {
                   auto& p = n.parents[0];
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   for (std::size_t i = 0; i < dldp.size(); ++i)
                     p->grad[i] += dldp[i] * n.grad[0];
                 });
}

// --------------------------------------------------------------- attention

namespace {

// Softmax weights for q kT / sqrt(d); sums in sorted order when requested.
std::vector<double> compute_attention_weights(const Tensor& q, const Tensor& k,
                                              bool invariant) {
  int nq = q.dim(0), d = q.dim(1), nk = k.dim(0);
  double sc = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> w(static_cast<std::size_t>(nq) * nk);
  const double* qv = q.values().data();
  const double* kv = k.values().data();
  std::vector<double> buf(static_cast<std::size_t>(nk));
  for (int i = 0; i < nq; ++i) {
    double* wrow = w.data() + static_cast<std::size_t>(i) * nk;
    const double* qrow = qv + static_cast<std::size_t>(i) * d;
    double mx = -1e300;
    for (int j = 0; j < nk; ++j) {
      const double* krow = kv + static_cast<std::size_t>(j) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += qrow[c] * krow[c];
      wrow[j] = s * sc;
      mx = std::max(mx, wrow[j]);
    }
    double denom;
    if (invariant) {
      for (int j = 0; j < nk; ++j) {
        wrow[j] = std::exp(wrow[j] - mx);
        buf[static_cast<std::size_t>(j)] = wrow[j];
      }
      denom = order_invariant_sum(buf);
    } else {
      denom = 0.0;
      for (int j = 0; j < nk; ++j) {
        wrow[j] = std::exp(wrow[j] - mx);
        denom += wrow[j];
      }
    }
    for (int j = 0; j < nk; ++j) wrow[j] /= denom;
  }
  return w;
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 bool order_invariant_sums) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) {
    throw Error(ErrorCategory::kShape, "attention expects matrices");
  }
  if (q.dim(1) != k.dim(1)) shape_error("attention q/k", q, k);
  if (k.dim(0) != v.dim(0)) shape_error("attention k/v", k, v);
  int nq = q.dim(0), d = q.dim(1), nk = k.dim(0), dv = v.dim(1);
  std::vector<double> w = compute_attention_weights(q, k, order_invariant_sums);
  std::vector<double> out(static_cast<std::size_t>(nq) * dv, 0.0);
  const double* vv = v.values().data();
  if (order_invariant_sums) {
    std::vector<double> buf(static_cast<std::size_t>(nk));
    for (int i = 0; i < nq; ++i) {
      const double* wrow = w.data() + static_cast<std::size_t>(i) * nk;
      double* orow = out.data() + static_cast<std::size_t>(i) * dv;
      for (int c = 0; c < dv; ++c) {
        for (int j = 0; j < nk; ++j)
          buf[static_cast<std::size_t>(j)] =
              wrow[j] * vv[static_cast<std::size_t>(j) * dv + c];
        orow[c] = order_invariant_sum(buf);
      }
    }
  } else {
    for (int i = 0; i < nq; ++i) {
      const double* wrow = w.data() + static_cast<std::size_t>(i) * nk;
      double* orow = out.data() + static_cast<std::size_t>(i) * dv;
      for (int j = 0; j < nk; ++j) {
        double wij = wrow[j];
        const double* vrow = vv + static_cast<std::size_t>(j) * dv;
        for (int c = 0; c < dv; ++c) orow[c] += wij * vrow[c];
      }
    }
  }
  std::vector<double> qc = q.values(), kc = k.values(), vc = v.values();
  return op_node(
      {nq, dv}, std::move(out), {q, k, v},
      [nq, d, nk, dv, w = std::move(w), qc = std::move(qc), kc = std::move(kc),
       vc = std::move(vc)](Node& n) {
        auto& pq = n.parents[0];
        auto& pk = n.parents[1];
        auto& pv = n.parents[2];
        const double* g = n.grad.data();
        double sc = 1.0 / std::sqrt(static_cast<double>(d));
        // dV
        if (pv->requires_grad) {
          pv->ensure_grad();
          for (int j = 0; j < nk; ++j) {
            double* gv = pv->grad.data() + static_cast<std::size_t>(j) * dv;
            for (int i = 0; i < nq; ++i) {
              double wij = w[static_cast<std::size_t>(i) * nk + j];
              const double* grow = g + static_cast<std::size_t>(i) * dv;
              for (int c = 0; c < dv; ++c) gv[c] += wij * grow[c];
            }
          }
        }
        if (!pq->requires_grad && !pk->requires_grad) return;
        // dW then softmax backward to scores, then to q and k.
        std::vector<double> gs(static_cast<std::size_t>(nk));
        for (int i = 0; i < nq; ++i) {
          const double* grow = g + static_cast<std::size_t>(i) * dv;
          const double* wrow = w.data() + static_cast<std::size_t>(i) * nk;
          double dot = 0.0;
          for (int j = 0; j < nk; ++j) {
            const double* vrow = vc.data() + static_cast<std::size_t>(j) * dv;
            double gw = 0.0;
            for (int c = 0; c < dv; ++c) gw += grow[c] * vrow[c];
            gs[static_cast<std::size_t>(j)] = gw;
            dot += gw * wrow[j];
          }
          for (int j = 0; j < nk; ++j)
            gs[static_cast<std::size_t>(j)] =
                wrow[j] * (gs[static_cast<std::size_t>(j)] - dot);
          const double* qrow = qc.data() + static_cast<std::size_t>(i) * d;
          if (pq->requires_grad) {
            pq->ensure_grad();
            double* gq = pq->grad.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < nk; ++j) {
              double s = gs[static_cast<std::size_t>(j)] * sc;
              const double* krow = kc.data() + static_cast<std::size_t>(j) * d;
              for (int c = 0; c < d; ++c) gq[c] += s * krow[c];
            }
          }
          if (pk->requires_grad) {
            pk->ensure_grad();
            for (int j = 0; j < nk; ++j) {
              double s = gs[static_cast<std::size_t>(j)] * sc;
              double* gk = pk->grad.data() + static_cast<std::size_t>(j) * d;
              for (int c = 0; c < d; ++c) gk[c] += s * qrow[c];
            }
          }
        }
      });
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
  if (q.ndim() != 2 || k.ndim() != 2 || q.dim(1) != k.dim(1)) {
    shape_error("attention_weights", q, k);
  }
  std::vector<double> w = compute_attention_weights(q, k, false);
  return Tensor::from({q.dim(0), k.dim(0)}, std::move(w), false);
}

// ---------------------------------------------------------- grad checking

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                  std::vector<Tensor>& inputs, double epsilon,
                  int probes_per_tensor, Rng& rng) {
  if (epsilon < 1e-7 || epsilon > 1e-4) {
    throw Error(ErrorCategory::kNumeric,
                "grad_check epsilon must lie in [1e-7, 1e-4]");
  }
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor out = fn(inputs);
  if (out.numel() != 1) {
    throw Error(ErrorCategory::kShape, "grad_check function must be scalar");
  }
  if (!std::isfinite(out.item())) return HUGE_VAL;
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    analytic.push_back(t.grad());
    for (double g : analytic.back()) {
      if (!std::isfinite(g)) return HUGE_VAL;
    }
  }

  double max_rel = 0.0;
  std::vector<double> direction;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& vals = inputs[ti].values();
    const std::vector<double> saved = vals;
    direction.resize(vals.size());
    double gnorm = 0.0;
    for (double g : analytic[ti]) gnorm += g * g;
    gnorm = std::sqrt(gnorm);
    for (int probe = 0; probe < probes_per_tensor; ++probe) {
      // Redraw directions that are nearly orthogonal to the gradient; a
      // cancelled analytic derivative says nothing and only measures the
      // difference noise floor.
      double a = 0.0;
      for (int attempt = 0; attempt < 16; ++attempt) {
        a = 0.0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
          direction[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
          a += direction[i] * analytic[ti][i];
        }
        if (gnorm == 0.0 || std::fabs(a) >= 0.05 * gnorm) break;
      }
      for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = saved[i] + epsilon * direction[i];
      double fp = fn(inputs).item();
      for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = saved[i] - epsilon * direction[i];
      double fm = fn(inputs).item();
      vals = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) return HUGE_VAL;
      double fd = (fp - fm) / (2.0 * epsilon);
      double denom = std::max({std::fabs(a), std::fabs(fd), 1e-12});
      max_rel = std::max(max_rel, std::fabs(a - fd) / denom);
    }
  }
  return max_rel;
}

}  // namespace num
}  // namespace flowdiar
