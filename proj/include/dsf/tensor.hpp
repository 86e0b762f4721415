#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dsf {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily during backward
  bool requires_grad = false;
  // tape edges; cleared once backward has consumed them
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense float64 tensor with reverse-mode autodiff. A Tensor is a cheap handle;
// ops record a dynamic tape that backward() consumes and frees.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const;
  int64_t numel() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaf initialization only
  double item() const;                  // scalar tensors
  double at(const std::vector<int>& index) const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  // reverse topological traversal from a scalar; accumulates grads, then
  // drops the tape edges so intermediate nodes can be freed
  void backward() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  // low-level op constructor used by every operation in the library;
  // backprop reads out.grad and += into each input's grad
  static Tensor make_op(Shape shape, std::vector<double> data,
                        std::vector<Tensor> inputs,
                        std::function<void(detail::TensorImpl&)> backprop,
                        const char* op_name);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// thread-local autograd switch; forwards run tape-free inside a NoGradGuard
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// smooth-L1 of (pred - target), elementwise: 0.5 x^2 for |x| < 1 else |x| - 0.5
Tensor smooth_l1(const Tensor& pred, const Tensor& target);

// shape
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);                       // 2-D
Tensor concat_rows(const std::vector<Tensor>& parts);    // along axis 0
Tensor slice_rows(const Tensor& a, int begin, int end);  // [begin, end)
Tensor take_rows(const Tensor& a, const std::vector<int>& indices);

// reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// linear algebra / nn
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& a);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x: [c_in x H x W], k: [c_out x c_in x 3 x 3], padding 1, stride in {1, 2}
Tensor conv2d(const Tensor& x, const Tensor& k, int stride);
Tensor bias_channels(const Tensor& x, const Tensor& b);  // per-channel add
// mean over rows of (logsumexp(row) - row[label]); label -1 rows are skipped
Tensor cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int>& labels);

namespace detail {
// row-major double GEMM kernels shared by matmul/conv/linear and their grads
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate);
}  // namespace detail

}  // namespace dsf
