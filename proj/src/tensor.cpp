#include "safl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace safl {

namespace detail {

struct NodeAccess {
  static const std::shared_ptr<TensorNode>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

namespace {

using detail::NodeAccess;
using detail::TensorNode;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data.assign(shape_numel(n->shape), 0.0);
  n->requires_grad = requires_grad;
  return n;
}

const std::shared_ptr<TensorNode>& node_of(const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("tensor: operation on undefined tensor");
  return NodeAccess::node(t);
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
  }
}

bool want_graph(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Attaches parents and the pull-style backward function when any input
// participates in the graph.
Tensor finish_op(std::shared_ptr<TensorNode> out,
                 std::initializer_list<const Tensor*> inputs,
                 std::function<void(TensorNode&)> backward_fn) {
  if (want_graph(inputs)) {
    out->requires_grad = true;
    out->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) out->parents.push_back(node_of(*t));
    out->backward_fn = std::move(backward_fn);
  }
  return NodeAccess::wrap(std::move(out));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  std::fill(n->data.begin(), n->data.end(), value);
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

int Tensor::rows() const {
  require_2d(*this, "rows");
  return node_->shape[0];
}

int Tensor::cols() const {
  require_2d(*this, "cols");
  return node_->shape[1];
}

double Tensor::at(int r, int c) const {
  require_2d(*this, "at");
  return node_->data[static_cast<std::size_t>(r) * node_->shape[1] + c];
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: value() on non-scalar of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (!node_ || node_->grad.empty()) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  const auto& root = node_of(loss);
  if (root->data.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(root->shape));
  }

  // Iterative post-order DFS; visitation order is deterministic for a given
  // graph construction order, which fixes the gradient summation order.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate gradients are per-call scratch; leaf gradients accumulate
  // across calls.
  for (TensorNode* n : topo) {
    if (!n->is_leaf()) {
      n->grad.assign(n->data.size(), 0.0);
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  auto out = make_node({m, n}, false);
  {
    const double* pa = node_of(a)->data.data();
    const double* pb = node_of(b)->data.data();
    double* pc = out->data.data();
    for (int i = 0; i < m; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        const double av = pa[i * k + kk];
        const double* brow = pb + static_cast<std::size_t>(kk) * n;
        double* crow = pc + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return finish_op(std::move(out), {&a, &b}, [m, k, n](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = dC . B^T
      for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += g[i * n + j] * pb.data[kk * n + j];
          pa.grad[static_cast<std::size_t>(i) * k + kk] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T . dC
      for (int kk = 0; kk < k; ++kk) {
        for (int i = 0; i < m; ++i) {
          const double av = pa.data[static_cast<std::size_t>(i) * k + kk];
          for (int j = 0; j < n; ++j) {
            pb.grad[static_cast<std::size_t>(kk) * n + j] += av * g[i * n + j];
          }
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const int m = x.shape()[0], n = x.shape()[1];
  auto out = make_node({n, m}, false);
  const double* px = node_of(x)->data.data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out->data[static_cast<std::size_t>(j) * m + i] = px[i * n + j];
  }
  return finish_op(std::move(out), {&x}, [m, n](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) {
        px.grad[static_cast<std::size_t>(i) * n + j] += self.grad[static_cast<std::size_t>(j) * m + i];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  auto out = make_node(a.shape(), false);
  const auto& da = node_of(a)->data;
  const auto& db = node_of(b)->data;
  for (std::size_t i = 0; i < da.size(); ++i) out->data[i] = da[i] + db[i];
  return finish_op(std::move(out), {&a, &b}, [](TensorNode& self) {
    for (int p = 0; p < 2; ++p) {
      TensorNode& par = *self.parents[p];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
    }
  });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_rowwise");
  const int m = x.shape()[0], n = x.shape()[1];
  if (bias.shape() != std::vector<int>{n}) {
    throw std::invalid_argument("add_rowwise: bias shape " + shape_str(bias.shape()) +
                                " does not match row width " + std::to_string(n));
  }
  auto out = make_node({m, n}, false);
  const auto& dx = node_of(x)->data;
  const auto& db = node_of(bias)->data;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out->data[static_cast<std::size_t>(i) * n + j] = dx[i * n + j] + db[j];
  }
  return finish_op(std::move(out), {&x, &bias}, [m, n](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) pb.grad[j] += self.grad[static_cast<std::size_t>(i) * n + j];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  auto out = make_node(a.shape(), false);
  const auto& da = node_of(a)->data;
  const auto& db = node_of(b)->data;
  for (std::size_t i = 0; i < da.size(); ++i) out->data[i] = da[i] * db[i];
  return finish_op(std::move(out), {&a, &b}, [](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  auto out = make_node(x.shape(), false);
  const auto& dx = node_of(x)->data;
  for (std::size_t i = 0; i < dx.size(); ++i) out->data[i] = dx[i] * c;
  return finish_op(std::move(out), {&x}, [c](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * c;
  });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.shape().empty() || x.size() == 0) {
    throw std::domain_error("softmax_rows: empty tensor");
  }
  require_2d(x, "softmax_rows");
  const int m = x.shape()[0], n = x.shape()[1];
  auto out = make_node({m, n}, false);
  const auto& dx = node_of(x)->data;
  for (int i = 0; i < m; ++i) {
    const double* row = dx.data() + static_cast<std::size_t>(i) * n;
    double* orow = out->data.data() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= denom;
  }
  return finish_op(std::move(out), {&x}, [m, n](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* y = self.data.data() + static_cast<std::size_t>(i) * n;
      const double* gy = self.grad.data() + static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
      double* gx = px.grad.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "layer_norm");
  const int m = x.shape()[0], n = x.shape()[1];
  if (gain.shape() != std::vector<int>{n} || bias.shape() != std::vector<int>{n}) {
    throw std::invalid_argument("layer_norm: gain/bias shape must be (" + std::to_string(n) + ")");
  }
  auto out = make_node({m, n}, false);
  const auto& dx = node_of(x)->data;
  const auto& dg = node_of(gain)->data;
  const auto& db = node_of(bias)->data;
  // Per-row normalization; xhat is recomputed in backward from saved data.
  std::vector<double> inv_std(m), mean(m);
  for (int i = 0; i < m; ++i) {
    const double* row = dx.data() + static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = is;
    double* orow = out->data.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] = dg[j] * (row[j] - mu) * is + db[j];
  }
  return finish_op(std::move(out), {&x, &gain, &bias},
                   [m, n, mean = std::move(mean), inv_std = std::move(inv_std)](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    TensorNode& pg = *self.parents[1];
    TensorNode& pb = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pg.requires_grad) pg.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* row = px.data.data() + static_cast<std::size_t>(i) * n;
      const double* gy = self.grad.data() + static_cast<std::size_t>(i) * n;
      const double mu = mean[i];
      const double is = inv_std[i];
      if (pg.requires_grad || pb.requires_grad) {
        for (int j = 0; j < n; ++j) {
          const double xhat = (row[j] - mu) * is;
          if (pg.requires_grad) pg.grad[j] += gy[j] * xhat;
          if (pb.requires_grad) pb.grad[j] += gy[j];
        }
      }
      if (px.requires_grad) {
        double sum_d = 0.0, sum_dx = 0.0;
        for (int j = 0; j < n; ++j) {
          const double d = gy[j] * pg.data[j];
          const double xhat = (row[j] - mu) * is;
          sum_d += d;
          sum_dx += d * xhat;
        }
        double* gx = px.grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
          const double d = gy[j] * pg.data[j];
          const double xhat = (row[j] - mu) * is;
          gx[j] += is * (d - sum_d / n - xhat * sum_dx / n);
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  auto out = make_node(x.shape(), false);
  const auto& dx = node_of(x)->data;
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    out->data[i] = 0.5 * dx[i] * (1.0 + std::erf(dx[i] * inv_sqrt2));
  }
  return finish_op(std::move(out), {&x}, [](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    constexpr double is2 = std::numbers::sqrt2 / 2.0;
    constexpr double inv_sqrt2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = px.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * is2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      px.grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup");
  const int v = table.shape()[0], d = table.shape()[1];
  const int n = static_cast<int>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(v) + ")");
    }
  }
  auto out = make_node({n, d}, false);
  const auto& dt = node_of(table)->data;
  for (int i = 0; i < n; ++i) {
    const double* src = dt.data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, out->data.begin() + static_cast<std::size_t>(i) * d);
  }
  return finish_op(std::move(out), {&table}, [ids, d](TensorNode& self) {
    TensorNode& pt = *self.parents[0];
    if (!pt.requires_grad) return;
    pt.ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = pt.grad.data() + static_cast<std::size_t>(ids[i]) * d;
      const double* src = self.grad.data() + i * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  require_2d(logits, "cross_entropy_with_logits");
  const int m = logits.shape()[0], n = logits.shape()[1];
  if (static_cast<int>(labels.size()) != m) {
    throw std::invalid_argument("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(m) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || l >= n) {
      throw std::invalid_argument("cross_entropy_with_logits: label " + std::to_string(l) +
                                  " out of range [0," + std::to_string(n) + ")");
    }
  }
  auto out = make_node({1}, false);
  const auto& dl = node_of(logits)->data;
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const double* row = dl.data() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
    total += mx + std::log(denom) - row[labels[i]];
  }
  out->data[0] = total / m;
  return finish_op(std::move(out), {&logits}, [m, n, labels](TensorNode& self) {
    TensorNode& pl = *self.parents[0];
    if (!pl.requires_grad) return;
    pl.ensure_grad();
    const double g = self.grad[0] / m;
    for (int i = 0; i < m; ++i) {
      const double* row = pl.data.data() + static_cast<std::size_t>(i) * n;
      double mx = row[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double denom = 0.0;
      for (int j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
      double* gx = pl.grad.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double p = std::exp(row[j] - mx) / denom;
        gx[j] += g * (p - (j == labels[i] ? 1.0 : 0.0));
      }
    }
  });
}

Tensor slice_cols(const Tensor& x, int col0, int width) {
  require_2d(x, "slice_cols");
  const int m = x.shape()[0], n = x.shape()[1];
  if (col0 < 0 || width <= 0 || col0 + width > n) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(col0) + "," +
                                std::to_string(col0 + width) + ") outside width " + std::to_string(n));
  }
  auto out = make_node({m, width}, false);
  const auto& dx = node_of(x)->data;
  for (int i = 0; i < m; ++i) {
    const double* src = dx.data() + static_cast<std::size_t>(i) * n + col0;
    std::copy(src, src + width, out->data.begin() + static_cast<std::size_t>(i) * width);
  }
  return finish_op(std::move(out), {&x}, [m, n, col0, width](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int i = 0; i < m; ++i) {
      double* dst = px.grad.data() + static_cast<std::size_t>(i) * n + col0;
      const double* src = self.grad.data() + static_cast<std::size_t>(i) * width;
      for (int j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].shape()[0];
  int total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.shape()[0] != m) {
      throw std::invalid_argument("concat_cols: row count mismatch: " + shape_str(p.shape()));
    }
    total += p.shape()[1];
  }
  auto out = make_node({m, total}, false);
  std::vector<int> widths;
  widths.reserve(parts.size());
  int off = 0;
  for (const Tensor& p : parts) {
    const int w = p.shape()[1];
    widths.push_back(w);
    const auto& dp = node_of(p)->data;
    for (int i = 0; i < m; ++i) {
      std::copy(dp.begin() + static_cast<std::size_t>(i) * w,
                dp.begin() + static_cast<std::size_t>(i + 1) * w,
                out->data.begin() + static_cast<std::size_t>(i) * total + off);
    }
    off += w;
  }
  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
  if (!any_grad) return NodeAccess::wrap(std::move(out));
  out->requires_grad = true;
  for (const Tensor& p : parts) out->parents.push_back(node_of(p));
  out->backward_fn = [m, total, widths](TensorNode& self) {
    int off2 = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      TensorNode& p = *self.parents[pi];
      const int w = widths[pi];
      if (p.requires_grad) {
        p.ensure_grad();
        for (int i = 0; i < m; ++i) {
          const double* src = self.grad.data() + static_cast<std::size_t>(i) * total + off2;
          double* dst = p.grad.data() + static_cast<std::size_t>(i) * w;
          for (int j = 0; j < w; ++j) dst[j] += src[j];
        }
      }
      off2 += w;
    }
  };
  return NodeAccess::wrap(std::move(out));
}

Tensor sum(const Tensor& x) {
  auto out = make_node({1}, false);
  const auto& dx = node_of(x)->data;
  double acc = 0.0;
  for (double v : dx) acc += v;
  out->data[0] = acc;
  return finish_op(std::move(out), {&x}, [](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += self.grad[0];
  });
}

Tensor sample_gaussian(RngStream& rng, const std::vector<int>& shape, double std_dev) {
  if (std_dev < 0.0) throw std::invalid_argument("sample_gaussian: negative std");
  auto out = make_node(shape, false);
  for (double& v : out->data) v = rng.next_gaussian() * std_dev;
  return NodeAccess::wrap(std::move(out));
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double l2_norm(const Tensor& x) { return l2_norm(x.data()); }

}  // namespace safl
