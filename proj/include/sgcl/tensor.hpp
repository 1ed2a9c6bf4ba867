#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgcl/common.hpp"

namespace sgcl {

// One node of the reverse-mode tape. Interior nodes carry a backprop closure that
// reads this node's grad and accumulates into its parents' grads. Nodes with
// requires_grad == false store neither parents nor a closure, so inference builds
// no tape at all.
struct TensorNode {
  std::vector<int> shape;  // empty == scalar
  std::vector<double> val;
  std::vector<double> grad;  // sized lazily; empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  size_t size() const { return val.size(); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor vec(std::vector<double> v, bool requires_grad = false);
  static Tensor mat(int rows, int cols, std::vector<double> v, bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  size_t size() const { return n_->val.size(); }
  int rows() const;
  int cols() const;
  double item() const;

  std::vector<double>& values() { return n_->val; }
  const std::vector<double>& values() const { return n_->val; }
  std::vector<double>& grad() { n_->ensure_grad(); return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  void zero_grad() { n_->grad.assign(n_->val.size(), 0.0); }

  const std::shared_ptr<TensorNode>& node() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

std::string shape_str(const std::vector<int>& s);

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowwise(const Tensor& m, const Tensor& v);  // [N x d] + [d], broadcast over rows

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int> shape);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// Row-wise on rank 2, whole tensor on rank 1. Output rows are positive and sum to 1.
Tensor softmax(const Tensor& a);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor colsum(const Tensor& m);  // [N x d] -> [d]
Tensor rowsum(const Tensor& m);  // [N x d] -> [N]

Tensor concat(const Tensor& a, const Tensor& b);             // rank 1
Tensor slice(const Tensor& v, int start, int len);           // rank 1
Tensor stack_rows(std::span<const Tensor> rows);             // n x [d] -> [n x d]
Tensor gather_rows(const Tensor& m, const std::vector<int>& idx);
Tensor row_scale(const Tensor& m, const Tensor& s);          // row i scaled by s[i]
Tensor gather_elems(const Tensor& m, const std::vector<std::pair<int, int>>& idx);

Tensor dot(const Tensor& a, const Tensor& b);
Tensor l2_normalize(const Tensor& v);  // zero vector maps to zero
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // 0 when either input is zero

// Mean over the batch of -log softmax(logits)[target]. Accepts [B x C] or a single [C] row.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Reverse-mode accumulation from a scalar loss. Interior grads are reset per call;
// leaf grads accumulate until explicitly cleared.
void backward(const Tensor& loss);
// Same traversal but seeds `root` with an explicit cotangent (used to stitch
// separately built tapes together).
void backward_seed(const Tensor& root, const std::vector<double>& seed);

}  // namespace sgcl
