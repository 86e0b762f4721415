#include "dsf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace dsf {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got " + shape_str(shape));
  }
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string(op) + ": non-finite value in output");
    }
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// rows-by-rest view of the leading axis
int64_t rest_size(const Shape& s) {
  int64_t r = 1;
  for (size_t i = 1; i < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("from_data: " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::runtime_error("shape() on undefined tensor");
  return impl_->shape;
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size())) throw std::invalid_argument("dim index out of range");
  return s[i];
}

int64_t Tensor::numel() const {
  if (!impl_) return 0;
  return impl_->numel();
}

const std::vector<double>& Tensor::data() const {
  if (!impl_) throw std::runtime_error("data() on undefined tensor");
  return impl_->data;
}

std::vector<double>& Tensor::mutable_data() {
  if (!impl_) throw std::runtime_error("mutable_data() on undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(const std::vector<int>& index) const {
  const Shape& s = shape();
  require(index.size() == s.size(), "at(): index rank mismatch");
  int64_t off = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    require(index[i] >= 0 && index[i] < s[i], "at(): index out of range");
    off = off * s[i] + index[i];
  }
  return impl_->data[static_cast<size_t>(off)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  if (!impl_) throw std::runtime_error("set_requires_grad on undefined tensor");
  impl_->requires_grad = rg;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("grad() called before backward populated it");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                       std::function<void(detail::TensorImpl&)> backprop, const char* op_name) {
  check_finite(data, op_name);
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const Tensor& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  Tensor out = from_data(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    out.impl_->backprop = std::move(backprop);
    out.impl_->inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) out.impl_->inputs.push_back(in.impl());
  }
  return out;
}

void Tensor::backward() const {
  if (!impl_) throw std::runtime_error("backward() on undefined tensor");
  if (numel() != 1) throw std::invalid_argument("backward() requires a scalar loss, got " + shape_str(shape()));

  // iterative post-order DFS; order keeps shared ownership so freeing one
  // node's tape edges cannot destroy a node that still has to run
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, size_t>> stack;
  stack.emplace_back(impl_, 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      std::shared_ptr<detail::TensorImpl> child = node->inputs[idx];
      ++idx;
      if (child->requires_grad && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = it->get();
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
      // free the tape as we go
      node->backprop = nullptr;
      node->inputs.clear();
      node->grad.clear();  // interior grads are fully consumed here
    }
  }
}

namespace detail {

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      if (accumulate)
        crow[j] += acc;
      else
        crow[j] = acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  // a is [k x m], b is [k x n], c = a^T b is [m x n]
  if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
  for (int l = 0; l < k; ++l) {
    const double* arow = a + static_cast<size_t>(l) * m;
    const double* brow = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

namespace {

void accumulate(detail::TensorImpl& target, const std::vector<double>& g) {
  if (!target.requires_grad) return;
  target.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) target.grad[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto ai = a.impl(), bi = b.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a, b},
      [ai, bi](detail::TensorImpl& self) {
        accumulate(*ai, self.grad);
        accumulate(*bi, self.grad);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto ai = a.impl(), bi = b.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a, b},
      [ai, bi](detail::TensorImpl& self) {
        accumulate(*ai, self.grad);
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) bi->grad[i] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto ai = a.impl(), bi = b.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a, b},
      [ai, bi](detail::TensorImpl& self) {
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) bi->grad[i] += self.grad[i] * ai->data[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto ai = a.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [ai, s](detail::TensorImpl& self) {
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] * s;
        }
      },
      "scale");
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto ai = a.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [ai](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          if (ai->data[i] > 0.0) ai->grad[i] += self.grad[i];
      },
      "relu");
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  auto ai = a.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [ai](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] * self.data[i];
      },
      "exp");
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  auto ai = a.impl();
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [ai](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] / ai->data[i];
      },
      "log");
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "smooth_l1: shape mismatch");
  size_t n = pred.data().size();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    double x = pred.data()[i] - target.data()[i];
    double ax = std::fabs(x);
    out[i] = ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  }
  auto pi = pred.impl(), ti = target.impl();
  return Tensor::make_op(
      pred.shape(), std::move(out), {pred, target},
      [pi, ti](detail::TensorImpl& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
          double x = pi->data[i] - ti->data[i];
          double d = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
          if (pi->requires_grad) {
            pi->ensure_grad();
            pi->grad[i] += self.grad[i] * d;
          }
          if (ti->requires_grad) {
            ti->ensure_grad();
            ti->grad[i] -= self.grad[i] * d;
          }
        }
      },
      "smooth_l1");
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  require(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto ai = a.impl();
  return Tensor::make_op(
      std::move(shape), a.data(), {a},
      [ai](detail::TensorImpl& self) { accumulate(*ai, self.grad); }, "reshape");
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expected 2-D tensor, got " + shape_str(a.shape()));
  int p = a.dim(0), q = a.dim(1);
  std::vector<double> out(static_cast<size_t>(p) * q);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) out[static_cast<size_t>(j) * p + i] = a.data()[static_cast<size_t>(i) * q + j];
  auto ai = a.impl();
  return Tensor::make_op(
      {q, p}, std::move(out), {a},
      [ai, p, q](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (int j = 0; j < q; ++j)
          for (int i = 0; i < p; ++i)
            ai->grad[static_cast<size_t>(i) * q + j] += self.grad[static_cast<size_t>(j) * p + i];
      },
      "transpose");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty input list");
  int64_t rest = rest_size(parts[0].shape());
  int total_rows = 0;
  for (const Tensor& t : parts) {
    require(rest_size(t.shape()) == rest && t.rank() == parts[0].rank(),
            "concat_rows: trailing dimensions differ");
    total_rows += t.dim(0);
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = total_rows;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total_rows) * rest);
  for (const Tensor& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());

  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const Tensor& t : parts) impls.push_back(t.impl());
  return Tensor::make_op(
      std::move(out_shape), std::move(out), parts,
      [impls, rest](detail::TensorImpl& self) {
        size_t off = 0;
        for (auto& imp : impls) {
          size_t n = imp->data.size();
          if (imp->requires_grad) {
            imp->ensure_grad();
            for (size_t i = 0; i < n; ++i) imp->grad[i] += self.grad[off + i];
          }
          off += n;
        }
      },
      "concat_rows");
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
  require(a.rank() >= 1 && begin >= 0 && end <= a.dim(0) && begin < end,
          "slice_rows: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) + ") for " +
              shape_str(a.shape()));
  int64_t rest = rest_size(a.shape());
  Shape out_shape = a.shape();
  out_shape[0] = end - begin;
  std::vector<double> out(a.data().begin() + begin * rest, a.data().begin() + end * rest);
  auto ai = a.impl();
  return Tensor::make_op(
      std::move(out_shape), std::move(out), {a},
      [ai, begin, rest](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        size_t off = static_cast<size_t>(begin) * rest;
        for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[off + i] += self.grad[i];
      },
      "slice_rows");
}

Tensor take_rows(const Tensor& a, const std::vector<int>& indices) {
  require(a.rank() >= 1, "take_rows: rank-0 input");
  require(!indices.empty(), "take_rows: empty index list");
  int rows = a.dim(0);
  int64_t rest = rest_size(a.shape());
  Shape out_shape = a.shape();
  out_shape[0] = static_cast<int>(indices.size());
  std::vector<double> out(indices.size() * rest);
  for (size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] >= 0 && indices[r] < rows, "take_rows: index out of range");
    std::copy_n(a.data().begin() + static_cast<size_t>(indices[r]) * rest, rest, out.begin() + r * rest);
  }
  auto ai = a.impl();
  auto idx = indices;
  return Tensor::make_op(
      std::move(out_shape), std::move(out), {a},
      [ai, idx, rest](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r) {
          size_t src = r * rest, dst = static_cast<size_t>(idx[r]) * rest;
          for (int64_t i = 0; i < rest; ++i) ai->grad[dst + i] += self.grad[src + i];
        }
      },
      "take_rows");
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto ai = a.impl();
  return Tensor::make_op(
      {1}, {acc}, {a},
      [ai](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (double& g : ai->grad) g += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: expected 2-D operands");
  require(a.dim(1) == b.dim(0),
          "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  auto ai = a.impl(), bi = b.impl();
  return Tensor::make_op(
      {m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](detail::TensorImpl& self) {
        if (ai->requires_grad) {
          ai->ensure_grad();
          detail::gemm_nt(self.grad.data(), bi->data.data(), ai->grad.data(), m, n, k, true);
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          detail::gemm_tn(ai->data.data(), self.grad.data(), bi->grad.data(), k, m, n, true);
        }
      },
      "matmul");
}

Tensor softmax_rows(const Tensor& a) {
  require(a.rank() == 2, "softmax_rows: expected 2-D tensor, got " + shape_str(a.shape()));
  int p = a.dim(0), q = a.dim(1);
  std::vector<double> out(a.data().size());
  for (int i = 0; i < p; ++i) {
    const double* row = a.data().data() + static_cast<size_t>(i) * q;
    double* orow = out.data() + static_cast<size_t>(i) * q;
    double mx = row[0];
    for (int j = 1; j < q; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < q; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int j = 0; j < q; ++j) orow[j] /= denom;
  }
  auto ai = a.impl();
  return Tensor::make_op(
      {p, q}, std::move(out), {a},
      [ai, p, q](detail::TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (int i = 0; i < p; ++i) {
          const double* y = self.data.data() + static_cast<size_t>(i) * q;
          const double* g = self.grad.data() + static_cast<size_t>(i) * q;
          double* dx = ai->grad.data() + static_cast<size_t>(i) * q;
          double dot = 0.0;
          for (int j = 0; j < q; ++j) dot += g[j] * y[j];
          for (int j = 0; j < q; ++j) dx[j] += y[j] * (g[j] - dot);
        }
      },
      "softmax_rows");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2, "linear: expected 2-D x and w");
  require(x.dim(1) == w.dim(0), "linear: x columns " + shape_str(x.shape()) + " do not match w rows " +
                                    shape_str(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(1), "linear: bias shape mismatch");
  int p = x.dim(0), q = x.dim(1), r = w.dim(1);
  std::vector<double> out(static_cast<size_t>(p) * r);
  detail::gemm_nn(x.data().data(), w.data().data(), out.data(), p, q, r, false);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < r; ++j) out[static_cast<size_t>(i) * r + j] += b.data()[j];
  auto xi = x.impl(), wi = w.impl(), bi = b.impl();
  return Tensor::make_op(
      {p, r}, std::move(out), {x, w, b},
      [xi, wi, bi, p, q, r](detail::TensorImpl& self) {
        if (xi->requires_grad) {
          xi->ensure_grad();
          detail::gemm_nt(self.grad.data(), wi->data.data(), xi->grad.data(), p, r, q, true);
        }
        if (wi->requires_grad) {
          wi->ensure_grad();
          detail::gemm_tn(xi->data.data(), self.grad.data(), wi->grad.data(), q, p, r, true);
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (int i = 0; i < p; ++i)
            for (int j = 0; j < r; ++j) bi->grad[j] += self.grad[static_cast<size_t>(i) * r + j];
        }
      },
      "linear");
}

namespace {

// col is [ci*9 x Ho*Wo], padding 1
void im2col_3x3(const double* x, int ci, int h, int w, int stride, double* col, int ho, int wo) {
  const int n = ho * wo;
  for (int c = 0; c < ci; ++c) {
    const double* xc = x + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* crow = col + static_cast<size_t>(c * 9 + ky * 3 + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - 1;
          double* dst = crow + static_cast<size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - 1;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_3x3_add(const double* col, int ci, int h, int w, int stride, double* dx, int ho, int wo) {
  const int n = ho * wo;
  for (int c = 0; c < ci; ++c) {
    double* xc = dx + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* crow = col + static_cast<size_t>(c * 9 + ky * 3 + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const double* src = crow + static_cast<size_t>(oy) * wo;
          double* dst = xc + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride) {
  require(x.rank() == 3, "conv2d: expected input [c_in x H x W], got " + shape_str(x.shape()));
  require(k.rank() == 4 && k.dim(2) == 3 && k.dim(3) == 3,
          "conv2d: expected kernel [c_out x c_in x 3 x 3], got " + shape_str(k.shape()));
  require(k.dim(1) == x.dim(0), "conv2d: channel mismatch");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  int ci = x.dim(0), h = x.dim(1), w = x.dim(2), co = k.dim(0);
  int ho = (h - 1) / stride + 1, wo = (w - 1) / stride + 1;
  int kdim = ci * 9, n = ho * wo;

  auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(kdim) * n);
  im2col_3x3(x.data().data(), ci, h, w, stride, col->data(), ho, wo);
  std::vector<double> out(static_cast<size_t>(co) * n);
  detail::gemm_nn(k.data().data(), col->data(), out.data(), co, kdim, n, false);

  auto xi = x.impl(), ki = k.impl();
  return Tensor::make_op(
      {co, ho, wo}, std::move(out), {x, k},
      [xi, ki, col, ci, h, w, stride, co, kdim, n, ho, wo](detail::TensorImpl& self) {
        if (ki->requires_grad) {
          ki->ensure_grad();
          detail::gemm_nt(self.grad.data(), col->data(), ki->grad.data(), co, n, kdim, true);
        }
        if (xi->requires_grad) {
          xi->ensure_grad();
          std::vector<double> dcol(static_cast<size_t>(kdim) * n);
          detail::gemm_tn(ki->data.data(), self.grad.data(), dcol.data(), kdim, co, n, false);
          col2im_3x3_add(dcol.data(), ci, h, w, stride, xi->grad.data(), ho, wo);
        }
      },
      "conv2d");
}

Tensor bias_channels(const Tensor& x, const Tensor& b) {
  require(x.rank() == 3, "bias_channels: expected [c x H x W] input");
  require(b.rank() == 1 && b.dim(0) == x.dim(0), "bias_channels: bias shape mismatch");
  int c = x.dim(0);
  int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  std::vector<double> out(x.data().size());
  for (int ch = 0; ch < c; ++ch) {
    double bv = b.data()[ch];
    const double* src = x.data().data() + ch * hw;
    double* dst = out.data() + ch * hw;
    for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
  }
  auto xi = x.impl(), bi = b.impl();
  return Tensor::make_op(
      x.shape(), std::move(out), {x, b},
      [xi, bi, c, hw](detail::TensorImpl& self) {
        if (xi->requires_grad) accumulate(*xi, self.grad);
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (int ch = 0; ch < c; ++ch) {
            const double* g = self.grad.data() + ch * hw;
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += g[i];
            bi->grad[ch] += acc;
          }
        }
      },
      "bias_channels");
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, "cross_entropy_with_logits: expected 2-D logits");
  int p = logits.dim(0), c = logits.dim(1);
  require(static_cast<int>(labels.size()) == p, "cross_entropy_with_logits: label count mismatch");
  int valid = 0;
  double loss = 0.0;
  for (int i = 0; i < p; ++i) {
    int lab = labels[i];
    if (lab < 0) continue;
    require(lab < c, "cross_entropy_with_logits: label out of range");
    const double* row = logits.data().data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    loss += std::log(denom) + mx - row[lab];
    ++valid;
  }
  double scale_v = valid > 0 ? 1.0 / valid : 0.0;
  auto li = logits.impl();
  auto labs = labels;
  return Tensor::make_op(
      {1}, {loss * scale_v}, {logits},
      [li, labs, p, c, scale_v](detail::TensorImpl& self) {
        if (!li->requires_grad || scale_v == 0.0) return;
        li->ensure_grad();
        double g = self.grad[0] * scale_v;
        for (int i = 0; i < p; ++i) {
          int lab = labs[i];
          if (lab < 0) continue;
          const double* row = li->data.data() + static_cast<size_t>(i) * c;
          double* drow = li->grad.data() + static_cast<size_t>(i) * c;
          double mx = row[0];
          for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
          double denom = 0.0;
          for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
          for (int j = 0; j < c; ++j) {
            double soft = std::exp(row[j] - mx) / denom;
            drow[j] += g * (soft - (j == lab ? 1.0 : 0.0));
          }
        }
      },
      "cross_entropy_with_logits");
}

}  // namespace dsf
