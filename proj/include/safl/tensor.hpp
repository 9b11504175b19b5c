#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "safl/rng.hpp"

namespace safl {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return data.size(); }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

struct NodeAccess;

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode autodiff. A Tensor is
// a cheap handle on a shared graph node; values are written only at
// construction time, gradients only by backward().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  int rows() const;
  int cols() const;
  double at(int r, int c) const;
  double value() const;  // scalar tensors only

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();

 private:
  friend struct detail::NodeAccess;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// Populates dLoss/dLeaf for every requires_grad leaf reachable from `loss`.
// Leaf gradients accumulate across repeated calls; intermediate gradients are
// reset per call.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowwise(const Tensor& x, const Tensor& bias);  // (m,n) + (n)
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels);
Tensor slice_cols(const Tensor& x, int col0, int width);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& x);

Tensor sample_gaussian(RngStream& rng, const std::vector<int>& shape, double std_dev);

double l2_norm(std::span<const double> v);
double l2_norm(const Tensor& x);

std::string shape_str(const std::vector<int>& shape);

}  // namespace safl
