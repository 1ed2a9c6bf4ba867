#include "sgcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace sgcl {

namespace {

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, std::vector<double> val, bool rg) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  n->requires_grad = rg;
  return n;
}

size_t numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

// Wires up an interior node: tracked parents are the grad-requiring inputs only.
Tensor derived(std::vector<int> shape, std::vector<double> val,
               std::initializer_list<Tensor> inputs, std::function<void(TensorNode&)> back) {
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  auto n = make_node(std::move(shape), std::move(val), rg);
  if (rg) {
    n->leaf = false;
    for (const auto& t : inputs)
      if (t.requires_grad()) n->parents.push_back(t.node());
    n->backprop = std::move(back);
  }
  return Tensor(n);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void check_rank(const Tensor& a, int r, const char* op) {
  if (a.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                     shape_str(a.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::scalar(double v, bool rg) { return Tensor(make_node({}, {v}, rg)); }

Tensor Tensor::vec(std::vector<double> v, bool rg) {
  int n = static_cast<int>(v.size());
  return Tensor(make_node({n}, std::move(v), rg));
}

Tensor Tensor::mat(int rows, int cols, std::vector<double> v, bool rg) {
  if (v.size() != static_cast<size_t>(rows) * cols)
    throw ShapeError("mat: " + std::to_string(v.size()) + " values for shape " +
                     shape_str({rows, cols}));
  return Tensor(make_node({rows, cols}, std::move(v), rg));
}

Tensor Tensor::zeros(std::vector<int> shape, bool rg) {
  size_t n = numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), rg));
}

int Tensor::rows() const {
  check_rank(*this, 2, "rows");
  return n_->shape[0];
}

int Tensor::cols() const {
  check_rank(*this, 2, "cols");
  return n_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
  return n_->val[0];
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.node(), bn = b.node();
  return derived(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.node(), bn = b.node();
  return derived(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node(), bn = b.node();
  return derived(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * bn->val[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) bn->grad[i] += self.grad[i] * an->val[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an, c](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * c;
  });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  check_rank(m, 2, "add_rowwise");
  check_rank(v, 1, "add_rowwise");
  int r = m.rows(), c = m.cols();
  if (v.shape()[0] != c)
    throw ShapeError("add_rowwise: shape mismatch " + shape_str(m.shape()) + " vs " +
                     shape_str(v.shape()));
  std::vector<double> out(m.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] + v.values()[j];
  auto mn = m.node(), vn = v.node();
  return derived(m.shape(), std::move(out), {m, v}, [mn, vn, r, c](TensorNode& self) {
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) mn->grad[i] += self.grad[i];
    }
    if (vn->requires_grad) {
      vn->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) vn->grad[j] += self.grad[i * c + j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      double* orow = out.data() + i * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  auto an = a.node(), bn = b.node();
  return derived({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      // dA += G * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g + i * n;
          const double* brow = bn->val.data() + p * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          an->grad[i * k + p] += acc;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB += A^T * G
      for (int i = 0; i < m; ++i) {
        const double* arow = an->val.data() + i * k;
        const double* grow = g + i * n;
        for (int p = 0; p < k; ++p) {
          double aip = arow[p];
          if (aip == 0.0) continue;
          double* brow = bn->grad.data() + p * n;
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  check_rank(a, 2, "transpose");
  int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  auto an = a.node();
  return derived({c, r}, std::move(out), {a}, [an, r, c](TensorNode& self) {
    an->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) an->grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto an = a.node();
  return derived(std::move(shape), a.values(), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      if (an->val[i] > 0.0) an->grad[i] += self.grad[i];
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      an->grad[i] += self.grad[i] * (1.0 - self.val[i] * self.val[i]);
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      an->grad[i] += self.grad[i] * self.val[i] * (1.0 - self.val[i]);
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * self.val[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] / an->val[i];
  });
}

Tensor softmax(const Tensor& a) {
  int r, c;
  if (a.rank() == 1) {
    r = 1;
    c = a.shape()[0];
  } else if (a.rank() == 2) {
    r = a.rows();
    c = a.cols();
  } else {
    throw ShapeError("softmax: expected rank 1 or 2, got " + shape_str(a.shape()));
  }
  std::vector<double> out(a.size());
  for (int i = 0; i < r; ++i) {
    const double* x = a.values().data() + static_cast<size_t>(i) * c;
    double* y = out.data() + static_cast<size_t>(i) * c;
    double mx = x[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int j = 0; j < c; ++j) y[j] /= z;
  }
  auto an = a.node();
  return derived(a.shape(), std::move(out), {a}, [an, r, c](TensorNode& self) {
    an->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* y = self.val.data() + static_cast<size_t>(i) * c;
      const double* g = self.grad.data() + static_cast<size_t>(i) * c;
      double gy = 0.0;
      for (int j = 0; j < c; ++j) gy += g[j] * y[j];
      double* d = an->grad.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) d[j] += y[j] * (g[j] - gy);
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  return derived({}, {s}, {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < an->size(); ++i) an->grad[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  double inv = 1.0 / static_cast<double>(a.size());
  auto an = a.node();
  return derived({}, {s * inv}, {a}, [an, inv](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < an->size(); ++i) an->grad[i] += self.grad[0] * inv;
  });
}

Tensor colsum(const Tensor& m) {
  check_rank(m, 2, "colsum");
  int r = m.rows(), c = m.cols();
  std::vector<double> out(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += m.values()[i * c + j];
  auto mn = m.node();
  return derived({c}, std::move(out), {m}, [mn, r, c](TensorNode& self) {
    mn->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) mn->grad[i * c + j] += self.grad[j];
  });
}

Tensor rowsum(const Tensor& m) {
  check_rank(m, 2, "rowsum");
  int r = m.rows(), c = m.cols();
  std::vector<double> out(r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += m.values()[i * c + j];
  auto mn = m.node();
  return derived({r}, std::move(out), {m}, [mn, r, c](TensorNode& self) {
    mn->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) mn->grad[i * c + j] += self.grad[i];
  });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  check_rank(a, 1, "concat");
  check_rank(b, 1, "concat");
  int na = a.shape()[0], nb = b.shape()[0];
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto an = a.node(), bn = b.node();
  return derived({na + nb}, std::move(out), {a, b}, [an, bn, na, nb](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int i = 0; i < na; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < nb; ++i) bn->grad[i] += self.grad[na + i];
    }
  });
}

Tensor slice(const Tensor& v, int start, int len) {
  check_rank(v, 1, "slice");
  if (start < 0 || len < 0 || start + len > v.shape()[0])
    throw ShapeError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of range for " + shape_str(v.shape()));
  std::vector<double> out(v.values().begin() + start, v.values().begin() + start + len);
  auto vn = v.node();
  return derived({len}, std::move(out), {v}, [vn, start, len](TensorNode& self) {
    vn->ensure_grad();
    for (int i = 0; i < len; ++i) vn->grad[start + i] += self.grad[i];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  int d = rows[0].shape().empty() ? 1 : rows[0].shape()[0];
  int n = static_cast<int>(rows.size());
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n) * d);
  bool rg = false;
  for (const auto& r : rows) {
    check_rank(r, 1, "stack_rows");
    if (r.shape()[0] != d)
      throw ShapeError("stack_rows: row shape mismatch " + shape_str(rows[0].shape()) + " vs " +
                       shape_str(r.shape()));
    out.insert(out.end(), r.values().begin(), r.values().end());
    rg = rg || r.requires_grad();
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = {n, d};
  node->val = std::move(out);
  node->requires_grad = rg;
  if (rg) {
    node->leaf = false;
    std::vector<std::shared_ptr<TensorNode>> rn;
    rn.reserve(rows.size());
    for (const auto& r : rows) rn.push_back(r.node());
    for (const auto& p : rn)
      if (p->requires_grad) node->parents.push_back(p);
    node->backprop = [rn, d](TensorNode& self) {
      for (size_t i = 0; i < rn.size(); ++i) {
        if (!rn[i]->requires_grad) continue;
        rn[i]->ensure_grad();
        for (int j = 0; j < d; ++j) rn[i]->grad[j] += self.grad[i * d + j];
      }
    };
  }
  return Tensor(node);
}

Tensor gather_rows(const Tensor& m, const std::vector<int>& idx) {
  check_rank(m, 2, "gather_rows");
  int r = m.rows(), c = m.cols();
  std::vector<double> out;
  out.reserve(idx.size() * c);
  for (int i : idx) {
    if (i < 0 || i >= r)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       shape_str(m.shape()));
    out.insert(out.end(), m.values().begin() + static_cast<size_t>(i) * c,
               m.values().begin() + static_cast<size_t>(i + 1) * c);
  }
  auto mn = m.node();
  auto ix = idx;
  return derived({static_cast<int>(idx.size()), c}, std::move(out), {m},
                 [mn, ix, c](TensorNode& self) {
                   mn->ensure_grad();
                   for (size_t i = 0; i < ix.size(); ++i)
                     for (int j = 0; j < c; ++j)
                       mn->grad[static_cast<size_t>(ix[i]) * c + j] += self.grad[i * c + j];
                 });
}

Tensor row_scale(const Tensor& m, const Tensor& s) {
  check_rank(m, 2, "row_scale");
  check_rank(s, 1, "row_scale");
  int r = m.rows(), c = m.cols();
  if (s.shape()[0] != r)
    throw ShapeError("row_scale: shape mismatch " + shape_str(m.shape()) + " vs " +
                     shape_str(s.shape()));
  std::vector<double> out(m.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] * s.values()[i];
  auto mn = m.node(), sn = s.node();
  return derived(m.shape(), std::move(out), {m, s}, [mn, sn, r, c](TensorNode& self) {
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) mn->grad[i * c + j] += self.grad[i * c + j] * sn->val[i];
    }
    if (sn->requires_grad) {
      sn->ensure_grad();
      for (int i = 0; i < r; ++i) {
        double acc = 0.0;
        for (int j = 0; j < c; ++j) acc += self.grad[i * c + j] * mn->val[i * c + j];
        sn->grad[i] += acc;
      }
    }
  });
}

Tensor gather_elems(const Tensor& m, const std::vector<std::pair<int, int>>& idx) {
  check_rank(m, 2, "gather_elems");
  int r = m.rows(), c = m.cols();
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto [i, j] : idx) {
    if (i < 0 || i >= r || j < 0 || j >= c)
      throw ShapeError("gather_elems: index (" + std::to_string(i) + "," + std::to_string(j) +
                       ") out of range for " + shape_str(m.shape()));
    out.push_back(m.values()[static_cast<size_t>(i) * c + j]);
  }
  auto mn = m.node();
  auto ix = idx;
  return derived({static_cast<int>(idx.size())}, std::move(out), {m},
                 [mn, ix, c](TensorNode& self) {
                   mn->ensure_grad();
                   for (size_t k = 0; k < ix.size(); ++k)
                     mn->grad[static_cast<size_t>(ix[k].first) * c + ix[k].second] += self.grad[k];
                 });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_rank(a, 1, "dot");
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  auto an = a.node(), bn = b.node();
  return derived({}, {s}, {a, b}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < an->size(); ++i) an->grad[i] += self.grad[0] * bn->val[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < bn->size(); ++i) bn->grad[i] += self.grad[0] * an->val[i];
    }
  });
}

Tensor l2_normalize(const Tensor& v) {
  check_rank(v, 1, "l2_normalize");
  double nrm2 = 0.0;
  for (double x : v.values()) nrm2 += x * x;
  double nrm = std::sqrt(nrm2);
  std::vector<double> out(v.size(), 0.0);
  if (nrm > 0.0)
    for (size_t i = 0; i < v.size(); ++i) out[i] = v.values()[i] / nrm;
  auto vn = v.node();
  return derived(v.shape(), std::move(out), {v}, [vn, nrm](TensorNode& self) {
    if (nrm == 0.0) return;  // flat at the origin by convention
    vn->ensure_grad();
    double gy = 0.0;
    for (size_t i = 0; i < self.size(); ++i) gy += self.grad[i] * self.val[i];
    for (size_t i = 0; i < self.size(); ++i)
      vn->grad[i] += (self.grad[i] - self.val[i] * gy) / nrm;
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  return dot(l2_normalize(a), l2_normalize(b));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  Tensor x = logits.rank() == 1 ? reshape(logits, {1, logits.shape()[0]}) : logits;
  check_rank(x, 2, "cross_entropy");
  int batch = x.rows(), classes = x.cols();
  if (static_cast<int>(targets.size()) != batch)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(batch) + " rows");
  for (int t : targets)
    if (t < 0 || t >= classes)
      throw DataError("cross_entropy: target " + std::to_string(t) + " outside [0," +
                      std::to_string(classes) + ")");
  // softmax probabilities cached for the backward pass
  std::vector<double> probs(x.size());
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    const double* row = x.values().data() + static_cast<size_t>(i) * classes;
    double* p = probs.data() + static_cast<size_t>(i) * classes;
    double mx = row[0];
    for (int j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < classes; ++j) {
      p[j] = std::exp(row[j] - mx);
      z += p[j];
    }
    for (int j = 0; j < classes; ++j) p[j] /= z;
    loss -= std::log(p[targets[i]]);
  }
  loss /= batch;
  auto xn = x.node();
  auto tg = targets;
  return derived({}, {loss}, {x}, [xn, tg, probs, batch, classes](TensorNode& self) {
    xn->ensure_grad();
    double g = self.grad[0] / batch;
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < classes; ++j) {
        double d = probs[static_cast<size_t>(i) * classes + j] - (j == tg[i] ? 1.0 : 0.0);
        xn->grad[static_cast<size_t>(i) * classes + j] += g * d;
      }
  });
}

namespace {

// Reverse postorder over the grad-requiring subgraph: children come before parents.
std::vector<TensorNode*> topo_order(TensorNode* root) {
  std::vector<TensorNode*> order;
  if (!root->requires_grad) return order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, cursor] = stack.back();
    if (cursor < node->parents.size()) {
      TensorNode* p = node->parents[cursor++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace

void backward_seed(const Tensor& root, const std::vector<double>& seed) {
  if (seed.size() != root.size())
    throw ShapeError("backward_seed: seed size " + std::to_string(seed.size()) + " vs tensor " +
                     shape_str(root.shape()));
  if (!root.requires_grad()) return;
  auto order = topo_order(root.node().get());
  // Interior grads restart each pass; leaf grads accumulate until reset by the caller.
  for (TensorNode* n : order)
    if (!n->leaf) n->grad.assign(n->size(), 0.0);
  root.node()->ensure_grad();
  for (size_t i = 0; i < seed.size(); ++i) root.node()->grad[i] += seed[i];
  for (TensorNode* n : order)
    if (n->backprop) n->backprop(*n);
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  backward_seed(loss, {1.0});
}

}  // namespace sgcl
