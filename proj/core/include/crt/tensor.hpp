#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "crt/rng.hpp"

namespace crt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  // Reverse-mode graph: recorded parents plus a closure that reads this
  // node's grad and accumulates into the parents' grads.
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad();
};

// Dense row-major float64 tensor; a cheap handle onto a shared node.
// Values are immutable once an op has produced them; only grad accumulates.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi);
  static Tensor rand_normal(Shape shape, Rng& rng, double sigma);
  static Tensor rand_trunc_normal(Shape shape, Rng& rng, double sigma);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t size(int64_t axis) const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  const double* data() const { return impl_->data.data(); }
  double* data() { return impl_->data.data(); }
  const std::vector<double>& vec() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v);
  bool has_grad() const { return !impl_->grad.empty(); }
  const double* grad() const { return impl_->grad.data(); }
  double* grad_mutable();
  void zero_grad();

  // Scalar extraction; contract error unless numel() == 1.
  double item() const;
  double at(std::initializer_list<int64_t> idx) const;

  bool all_finite() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// RAII switch that disables graph recording (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Node constructor used by every op (and by modules that define custom
// differentiable ops, e.g. the tiler's merge). Records the graph edge only
// when grad mode is on and some parent requires grad.
Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn);

// Accumulates d(loss)/d(leaf) into every requires-grad node reachable from
// loss. loss must be scalar. Grads add across calls until zeroed.
void backward(const Tensor& loss);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor abs(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, std::vector<int64_t> dims);
Tensor transpose_last2(const Tensor& a);
Tensor narrow(const Tensor& a, int64_t axis, int64_t start, int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor tile_batch(const Tensor& a, int64_t repeat);  // [1,...] -> [repeat,...]

// ---- linear algebra ----
// a[..., m, k] x b[..., k, n]; b may be rank-2 (shared weight) or carry
// leading dims identical to a's.
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- normalization / activation over axes ----
Tensor softmax(const Tensor& a, int64_t axis);
// Normalizes the last axis to mean 0 / variance 1 (population), then applies
// gamma/beta of length D = last extent.
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps);
// y[b,c,...] = gamma[c] * x[b,c,...] + beta[c]
Tensor channel_affine(const Tensor& a, const Tensor& gamma, const Tensor& beta);
// b's shape must be a suffix of a's shape; added with leading broadcast.
Tensor bias_add(const Tensor& a, const Tensor& b);

// ---- conv / pooling ----
Tensor conv2d(const Tensor& x, const Tensor& k, int64_t stride, int64_t pad);
Tensor channel_bias_add(const Tensor& x, const Tensor& b);
Tensor global_avg_pool(const Tensor& x);  // [B,C,h,w] -> [B,C]

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, int64_t axis);
Tensor mean_axis(const Tensor& a, int64_t axis);

// ---- patch extraction ----
// [B,C,S,S] -> [B, N*N, C*p*p] with N = S/p; token features are laid out
// channel-major then row-major within the patch.
Tensor patchify(const Tensor& x, int64_t patch);

// ---- losses ----
// Mean over all elements of the stable logit-form sigmoid cross entropy.
// labels must hold exactly 0.0 or 1.0.
Tensor sigmoid_bce_with_logits(const Tensor& scores, const Tensor& labels);

}  // namespace crt
