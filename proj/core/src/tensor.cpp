#include "crt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "crt/error.hpp"

namespace crt {

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(bool cond, const std::string& m) {
  if (!cond) throw ShapeError(m);
}

int64_t normalize_axis(int64_t axis, int64_t rank, const char* op) {
  int64_t a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw ShapeError(msg(op, ": axis ", axis, " invalid for rank ", rank));
  return a;
}

// C[m x n] += A[m x k] * B[k x n]; per-cell accumulation runs over p
// ascending, so results are bit-stable under row parallelism.
void mm_accum(const double* A, const double* B, double* C, int64_t m,
              int64_t k, int64_t n) {
#pragma omp parallel for if (m * k * n > 32768) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

std::vector<double> transposed(const double* A, int64_t rows, int64_t cols) {
  std::vector<double> t(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) t[j * rows + i] = A[i * cols + j];
  return t;
}
}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(impl);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError(msg("Tensor::from: shape ", shape_str(shape),
                         " does not match ", values.size(), " values"));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(impl);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::rand_normal(Shape shape, Rng& rng, double sigma) {
  Tensor t = zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal() * sigma;
  return t;
}

Tensor Tensor::rand_trunc_normal(Shape shape, Rng& rng, double sigma) {
  Tensor t = zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.trunc_normal(sigma);
  return t;
}

int64_t Tensor::size(int64_t axis) const {
  return impl_->shape[static_cast<size_t>(
      normalize_axis(axis, rank(), "size"))];
}

Tensor& Tensor::set_requires_grad(bool v) {
  impl_->requires_grad = v;
  return *this;
}

double* Tensor::grad_mutable() {
  impl_->ensure_grad();
  return impl_->grad.data();
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError(msg("item: tensor has ", numel(), " elements"));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  if (static_cast<int64_t>(idx.size()) != rank())
    throw ShapeError("at: index rank mismatch");
  int64_t off = 0;
  size_t d = 0;
  for (int64_t i : idx) {
    off = off * impl_->shape[d] + i;
    ++d;
  }
  return impl_->data[static_cast<size_t>(off)];
}

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& p : parents)
      if (p.requires_grad()) any = true;
    if (any) {
      impl->requires_grad = true;
      impl->parents.reserve(parents.size());
      for (const Tensor& p : parents) impl->parents.push_back(p.impl());
      impl->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(impl);
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError(
        msg("backward: loss must be scalar, got ", shape_str(loss.shape())));

  // Post-order DFS: parents land before consumers, giving topological order.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------- elementwise

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_shape(a.shape() == b.shape(),
              msg(op, ": shapes ", shape_str(a.shape()), " vs ",
                  shape_str(b.shape()), " differ"));
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.vec().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i]);
  return make_op(a.shape(), std::move(out), {a}, [a, bwd](TensorImpl& self) {
    if (!a.requires_grad()) return;
    double* da = Tensor(a).grad_mutable();
    const double* g = self.grad.data();
    const double* x = a.data();
    for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i] * bwd(x[i]);
  });
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.vec().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& self) {
    const double* g = self.grad.data();
    if (a.requires_grad()) {
      double* da = Tensor(a).grad_mutable();
      for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i];
    }
    if (b.requires_grad()) {
      double* db = Tensor(b).grad_mutable();
      for (size_t i = 0; i < self.grad.size(); ++i) db[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.vec().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& self) {
    const double* g = self.grad.data();
    if (a.requires_grad()) {
      double* da = Tensor(a).grad_mutable();
      for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i];
    }
    if (b.requires_grad()) {
      double* db = Tensor(b).grad_mutable();
      for (size_t i = 0; i < self.grad.size(); ++i) db[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.vec().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& self) {
    const double* g = self.grad.data();
    if (a.requires_grad()) {
      double* da = Tensor(a).grad_mutable();
      for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      double* db = Tensor(b).grad_mutable();
      for (size_t i = 0; i < self.grad.size(); ++i) db[i] += g[i] * a.data()[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x * s; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary_op(
      a,
      [](double x) {
        double u = kC * (x + kA * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x) {
        double u = kC * (x + kA * x * x * x);
        double t = std::tanh(u);
        double du = kC * (1.0 + 3.0 * kA * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------- shape

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape_numel(shape) == a.numel(),
              msg("reshape: ", shape_str(a.shape()), " -> ", shape_str(shape),
                  " changes element count"));
  std::vector<double> out = a.vec();
  Shape in_shape = a.shape();
  return make_op(std::move(shape), std::move(out), {a},
                 [a](TensorImpl& self) {
                   if (!a.requires_grad()) return;
                   double* da = Tensor(a).grad_mutable();
                   const double* g = self.grad.data();
                   for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i];
                 });
}

namespace {
std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// out[i] = in[gather[i]] for a permutation copy.
std::vector<int64_t> permute_gather(const Shape& in_shape,
                                    const std::vector<int64_t>& dims) {
  const size_t r = in_shape.size();
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) out_shape[i] = in_shape[dims[i]];
  auto in_strides = row_major_strides(in_shape);
  std::vector<int64_t> out_strides_in(r);
  for (size_t i = 0; i < r; ++i) out_strides_in[i] = in_strides[dims[i]];

  const int64_t n = shape_numel(in_shape);
  std::vector<int64_t> gather(static_cast<size_t>(n));
  std::vector<int64_t> idx(r, 0);
  int64_t src = 0;
  for (int64_t o = 0; o < n; ++o) {
    gather[o] = src;
    for (size_t d = r; d-- > 0;) {
      ++idx[d];
      src += out_strides_in[d];
      if (idx[d] < out_shape[d]) break;
      src -= out_strides_in[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return gather;
}
}  // namespace

Tensor permute(const Tensor& a, std::vector<int64_t> dims) {
  const int64_t r = a.rank();
  check_shape(static_cast<int64_t>(dims.size()) == r,
              "permute: dims rank mismatch");
  std::vector<bool> used(static_cast<size_t>(r), false);
  for (int64_t d : dims) {
    check_shape(d >= 0 && d < r && !used[static_cast<size_t>(d)],
                "permute: dims is not a permutation");
    used[static_cast<size_t>(d)] = true;
  }
  Shape out_shape(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i)
    out_shape[static_cast<size_t>(i)] = a.shape()[static_cast<size_t>(dims[static_cast<size_t>(i)])];

  auto gather = permute_gather(a.shape(), dims);
  std::vector<double> out(static_cast<size_t>(a.numel()));
  const double* x = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[gather[i]];

  return make_op(std::move(out_shape), std::move(out), {a},
                 [a, gather](TensorImpl& self) {
                   if (!a.requires_grad()) return;
                   double* da = Tensor(a).grad_mutable();
                   const double* g = self.grad.data();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     da[gather[i]] += g[i];
                 });
}

Tensor transpose_last2(const Tensor& a) {
  std::vector<int64_t> dims(static_cast<size_t>(a.rank()));
  for (size_t i = 0; i < dims.size(); ++i) dims[i] = static_cast<int64_t>(i);
  check_shape(a.rank() >= 2, "transpose_last2: rank < 2");
  std::swap(dims[dims.size() - 1], dims[dims.size() - 2]);
  return permute(a, dims);
}

Tensor narrow(const Tensor& a, int64_t axis, int64_t start, int64_t length) {
  axis = normalize_axis(axis, a.rank(), "narrow");
  const int64_t extent = a.shape()[static_cast<size_t>(axis)];
  check_shape(start >= 0 && length >= 0 && start + length <= extent,
              msg("narrow: [", start, ",", start + length, ") out of [0,",
                  extent, ")"));
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = length;

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= a.shape()[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < a.rank(); ++i)
    inner *= a.shape()[static_cast<size_t>(i)];

  std::vector<double> out(static_cast<size_t>(outer * length * inner));
  const double* x = a.data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * length * inner,
                x + (o * extent + start) * inner,
                static_cast<size_t>(length * inner) * sizeof(double));

  return make_op(std::move(out_shape), std::move(out), {a},
                 [a, outer, inner, extent, start, length](TensorImpl& self) {
                   if (!a.requires_grad()) return;
                   double* da = Tensor(a).grad_mutable();
                   const double* g = self.grad.data();
                   for (int64_t o = 0; o < outer; ++o) {
                     double* dst = da + (o * extent + start) * inner;
                     const double* src = g + o * length * inner;
                     for (int64_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int64_t r = parts[0].rank();
  axis = normalize_axis(axis, r, "concat");
  int64_t total = 0;
  for (const Tensor& p : parts) {
    check_shape(p.rank() == r, "concat: rank mismatch");
    for (int64_t i = 0; i < r; ++i)
      if (i != axis)
        check_shape(p.shape()[static_cast<size_t>(i)] ==
                        parts[0].shape()[static_cast<size_t>(i)],
                    msg("concat: shape mismatch on axis ", i, ": ",
                        shape_str(p.shape()), " vs ",
                        shape_str(parts[0].shape())));
    total += p.shape()[static_cast<size_t>(axis)];
  }
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i)
    outer *= out_shape[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < r; ++i)
    inner *= out_shape[static_cast<size_t>(i)];

  std::vector<double> out(static_cast<size_t>(outer * total * inner));
  std::vector<int64_t> offsets, lengths;
  int64_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const int64_t len = p.shape()[static_cast<size_t>(axis)];
    lengths.push_back(len);
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * total + off) * inner,
                  p.data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(double));
    off += len;
  }

  return make_op(std::move(out_shape), std::move(out), parts,
                 [parts, offsets, lengths, outer, inner, total](TensorImpl& self) {
                   const double* g = self.grad.data();
                   for (size_t pi = 0; pi < parts.size(); ++pi) {
                     Tensor p = parts[pi];
                     if (!p.requires_grad()) continue;
                     double* dp = p.grad_mutable();
                     const int64_t len = lengths[pi];
                     for (int64_t o = 0; o < outer; ++o) {
                       const double* src = g + (o * total + offsets[pi]) * inner;
                       double* dst = dp + o * len * inner;
                       for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

Tensor tile_batch(const Tensor& a, int64_t repeat) {
  check_shape(a.rank() >= 1 && a.shape()[0] == 1,
              msg("tile_batch: leading extent must be 1, got ",
                  shape_str(a.shape())));
  if (repeat < 1) throw ContractError("tile_batch: repeat must be >= 1");
  Shape out_shape = a.shape();
  out_shape[0] = repeat;
  const int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n * repeat));
  for (int64_t r = 0; r < repeat; ++r)
    std::memcpy(out.data() + r * n, a.data(),
                static_cast<size_t>(n) * sizeof(double));
  return make_op(std::move(out_shape), std::move(out), {a},
                 [a, repeat, n](TensorImpl& self) {
                   if (!a.requires_grad()) return;
                   double* da = Tensor(a).grad_mutable();
                   const double* g = self.grad.data();
                   for (int64_t r = 0; r < repeat; ++r)
                     for (int64_t i = 0; i < n; ++i) da[i] += g[r * n + i];
                 });
}

// ------------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_shape(a.rank() >= 2, msg("matmul: lhs rank ", a.rank(), " < 2"));
  check_shape(b.rank() == 2 || b.rank() == a.rank(),
              msg("matmul: rhs rank ", b.rank(), " incompatible with lhs ",
                  shape_str(a.shape())));
  const int64_t m = a.shape()[a.shape().size() - 2];
  const int64_t k = a.shape()[a.shape().size() - 1];
  const int64_t kb = b.shape()[b.shape().size() - 2];
  const int64_t n = b.shape()[b.shape().size() - 1];
  check_shape(k == kb, msg("matmul: inner dimensions disagree: ",
                           shape_str(a.shape()), " x ", shape_str(b.shape())));
  const bool shared_b = b.rank() == 2 && a.rank() > 2;
  if (!shared_b && b.rank() != 2)
    for (size_t i = 0; i + 2 < a.shape().size(); ++i)
      check_shape(a.shape()[i] == b.shape()[i],
                  msg("matmul: batch dims disagree: ", shape_str(a.shape()),
                      " x ", shape_str(b.shape())));

  int64_t batch = 1;
  for (size_t i = 0; i + 2 < a.shape().size(); ++i) batch *= a.shape()[i];

  Shape out_shape = a.shape();
  out_shape[out_shape.size() - 1] = n;
  std::vector<double> out(static_cast<size_t>(batch * m * n), 0.0);

  const bool b_batched = b.rank() != 2;
  if (batch > 1 && m * k * n <= 32768) {
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < batch; ++bi) {
      const double* A = a.data() + bi * m * k;
      const double* B = b.data() + (b_batched ? bi * k * n : 0);
      double* C = out.data() + bi * m * n;
      for (int64_t i = 0; i < m; ++i) {
        const double* ar = A + i * k;
        double* cr = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
          const double av = ar[p];
          const double* br = B + p * n;
          for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
      }
    }
  } else {
    for (int64_t bi = 0; bi < batch; ++bi)
      mm_accum(a.data() + bi * m * k,
               b.data() + (b_batched ? bi * k * n : 0),
               out.data() + bi * m * n, m, k, n);
  }

  return make_op(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, batch, m, k, n, b_batched](TensorImpl& self) {
        const double* g = self.grad.data();
        if (a.requires_grad()) {
          double* da = Tensor(a).grad_mutable();
          if (b_batched) {
            for (int64_t bi = 0; bi < batch; ++bi) {
              auto bt = transposed(b.data() + bi * k * n, k, n);  // [n x k]
              mm_accum(g + bi * m * n, bt.data(), da + bi * m * k, m, n, k);
            }
          } else {
            auto bt = transposed(b.data(), k, n);
            for (int64_t bi = 0; bi < batch; ++bi)
              mm_accum(g + bi * m * n, bt.data(), da + bi * m * k, m, n, k);
          }
        }
        if (b.requires_grad()) {
          double* db = Tensor(b).grad_mutable();
          for (int64_t bi = 0; bi < batch; ++bi) {
            auto at = transposed(a.data() + bi * m * k, m, k);  // [k x m]
            mm_accum(at.data(), g + bi * m * n,
                     db + (b_batched ? bi * k * n : 0), k, m, n);
          }
        }
      });
}

// ------------------------------------------------- softmax / normalization

Tensor softmax(const Tensor& a, int64_t axis) {
  axis = normalize_axis(axis, a.rank(), "softmax");
  const int64_t extent = a.shape()[static_cast<size_t>(axis)];
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= a.shape()[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < a.rank(); ++i)
    inner *= a.shape()[static_cast<size_t>(i)];

  std::vector<double> out(static_cast<size_t>(a.numel()));
  const double* x = a.data();
#pragma omp parallel for collapse(2) if (outer * inner > 64) schedule(static)
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * extent * inner + i;
      double mx = x[base];
      for (int64_t e = 1; e < extent; ++e)
        mx = std::max(mx, x[base + e * inner]);
      double sum = 0.0;
      for (int64_t e = 0; e < extent; ++e) {
        double v = std::exp(x[base + e * inner] - mx);
        out[static_cast<size_t>(base + e * inner)] = v;
        sum += v;
      }
      const double inv = 1.0 / sum;
      for (int64_t e = 0; e < extent; ++e)
        out[static_cast<size_t>(base + e * inner)] *= inv;
    }
  }

  Tensor result = make_op(
      a.shape(), std::move(out), {a},
      [a, outer, inner, extent](TensorImpl& self) {
        if (!a.requires_grad()) return;
        double* da = Tensor(a).grad_mutable();
        const double* g = self.grad.data();
        const double* s = self.data.data();
#pragma omp parallel for collapse(2) if (outer * inner > 64) schedule(static)
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * extent * inner + i;
            double dot = 0.0;
            for (int64_t e = 0; e < extent; ++e)
              dot += g[base + e * inner] * s[base + e * inner];
            for (int64_t e = 0; e < extent; ++e)
              da[base + e * inner] +=
                  s[base + e * inner] * (g[base + e * inner] - dot);
          }
        }
      });
  return result;
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_shape(a.rank() >= 1, "layer_norm: rank 0 input");
  const int64_t D = a.shape().back();
  check_shape(gamma.rank() == 1 && gamma.shape()[0] == D,
              msg("layer_norm: gamma ", shape_str(gamma.shape()),
                  " does not match last axis ", D));
  check_shape(beta.rank() == 1 && beta.shape()[0] == D,
              msg("layer_norm: beta ", shape_str(beta.shape()),
                  " does not match last axis ", D));
  const int64_t rows = a.numel() / D;

  std::vector<double> out(static_cast<size_t>(a.numel()));
  auto xhat = std::make_shared<std::vector<double>>(
      static_cast<size_t>(a.numel()));
  auto inv_std = std::make_shared<std::vector<double>>(
      static_cast<size_t>(rows));
  const double* x = a.data();
  const double* gm = gamma.data();
  const double* bt = beta.data();
#pragma omp parallel for if (rows > 16) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * D;
    double mean = 0.0;
    for (int64_t j = 0; j < D; ++j) mean += xr[j];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t j = 0; j < D; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(D);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < D; ++j) {
      double h = (xr[j] - mean) * inv;
      (*xhat)[static_cast<size_t>(r * D + j)] = h;
      out[static_cast<size_t>(r * D + j)] = gm[j] * h + bt[j];
    }
  }

  return make_op(
      a.shape(), std::move(out), {a, gamma, beta},
      [a, gamma, beta, xhat, inv_std, rows, D](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* gm = gamma.data();
        if (a.requires_grad()) {
          double* da = Tensor(a).grad_mutable();
#pragma omp parallel for if (rows > 16) schedule(static)
          for (int64_t r = 0; r < rows; ++r) {
            const double* gr = g + r * D;
            const double* hr = xhat->data() + r * D;
            double s1 = 0.0, s2 = 0.0;
            for (int64_t j = 0; j < D; ++j) {
              double dh = gr[j] * gm[j];
              s1 += dh;
              s2 += dh * hr[j];
            }
            s1 /= static_cast<double>(D);
            s2 /= static_cast<double>(D);
            const double inv = (*inv_std)[static_cast<size_t>(r)];
            double* dar = da + r * D;
            for (int64_t j = 0; j < D; ++j) {
              double dh = gr[j] * gm[j];
              dar[j] += inv * (dh - s1 - hr[j] * s2);
            }
          }
        }
        if (gamma.requires_grad()) {
          double* dg = Tensor(gamma).grad_mutable();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < D; ++j)
              dg[j] += g[r * D + j] * (*xhat)[static_cast<size_t>(r * D + j)];
        }
        if (beta.requires_grad()) {
          double* db = Tensor(beta).grad_mutable();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < D; ++j) db[j] += g[r * D + j];
        }
      });
}

Tensor channel_affine(const Tensor& a, const Tensor& gamma,
                      const Tensor& beta) {
  check_shape(a.rank() >= 2, "channel_affine: rank < 2");
  const int64_t B = a.shape()[0];
  const int64_t C = a.shape()[1];
  check_shape(gamma.rank() == 1 && gamma.shape()[0] == C &&
                  beta.rank() == 1 && beta.shape()[0] == C,
              msg("channel_affine: gamma/beta must be [", C, "]"));
  const int64_t M = a.numel() / (B * C);

  std::vector<double> out(static_cast<size_t>(a.numel()));
  const double* x = a.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const double gmc = gamma.data()[c], btc = beta.data()[c];
      const double* xr = x + (b * C + c) * M;
      double* yr = out.data() + (b * C + c) * M;
      for (int64_t i = 0; i < M; ++i) yr[i] = gmc * xr[i] + btc;
    }

  return make_op(
      a.shape(), std::move(out), {a, gamma, beta},
      [a, gamma, beta, B, C, M](TensorImpl& self) {
        const double* g = self.grad.data();
        if (a.requires_grad()) {
          double* da = Tensor(a).grad_mutable();
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
              const double gmc = gamma.data()[c];
              const double* gr = g + (b * C + c) * M;
              double* dar = da + (b * C + c) * M;
              for (int64_t i = 0; i < M; ++i) dar[i] += gmc * gr[i];
            }
        }
        if (gamma.requires_grad()) {
          double* dg = Tensor(gamma).grad_mutable();
          const double* x = a.data();
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
              const double* gr = g + (b * C + c) * M;
              const double* xr = x + (b * C + c) * M;
              double acc = 0.0;
              for (int64_t i = 0; i < M; ++i) acc += gr[i] * xr[i];
              dg[c] += acc;
            }
        }
        if (beta.requires_grad()) {
          double* db = Tensor(beta).grad_mutable();
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
              const double* gr = g + (b * C + c) * M;
              double acc = 0.0;
              for (int64_t i = 0; i < M; ++i) acc += gr[i];
              db[c] += acc;
            }
        }
      });
}

Tensor bias_add(const Tensor& a, const Tensor& b) {
  const int64_t ra = a.rank(), rb = b.rank();
  check_shape(rb <= ra, "bias_add: bias rank exceeds input rank");
  for (int64_t i = 0; i < rb; ++i)
    check_shape(b.shape()[static_cast<size_t>(i)] ==
                    a.shape()[static_cast<size_t>(ra - rb + i)],
                msg("bias_add: ", shape_str(b.shape()),
                    " is not a suffix of ", shape_str(a.shape())));
  const int64_t n = b.numel();
  const int64_t rows = a.numel() / n;

  std::vector<double> out(static_cast<size_t>(a.numel()));
  const double* x = a.data();
  const double* bv = b.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(r * n + j)] = x[r * n + j] + bv[j];

  return make_op(a.shape(), std::move(out), {a, b},
                 [a, b, rows, n](TensorImpl& self) {
                   const double* g = self.grad.data();
                   if (a.requires_grad()) {
                     double* da = Tensor(a).grad_mutable();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       da[i] += g[i];
                   }
                   if (b.requires_grad()) {
                     double* db = Tensor(b).grad_mutable();
                     for (int64_t r = 0; r < rows; ++r)
                       for (int64_t j = 0; j < n; ++j) db[j] += g[r * n + j];
                   }
                 });
}

// --------------------------------------------------------------- conv / pool

Tensor conv2d(const Tensor& x, const Tensor& k, int64_t stride, int64_t pad) {
  check_shape(x.rank() == 4, msg("conv2d: input must be [B,C,h,w], got ",
                                 shape_str(x.shape())));
  check_shape(k.rank() == 4, msg("conv2d: kernel must be [Co,Ci,kh,kw], got ",
                                 shape_str(k.shape())));
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
  const int64_t B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  const int64_t Co = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
  check_shape(k.shape()[1] == Ci,
              msg("conv2d: channel mismatch: input ", shape_str(x.shape()),
                  " kernel ", shape_str(k.shape())));
  check_shape(kh <= H + 2 * pad && kw <= W + 2 * pad,
              msg("conv2d: kernel ", kh, "x", kw,
                  " larger than padded input ", H + 2 * pad, "x",
                  W + 2 * pad));
  const int64_t oh = (H + 2 * pad - kh) / stride + 1;
  const int64_t ow = (W + 2 * pad - kw) / stride + 1;

  std::vector<double> out(static_cast<size_t>(B * Co * oh * ow), 0.0);
  const double* xp = x.data();
  const double* kp = k.data();

  auto ox_bounds = [&](int64_t kx, int64_t& lo, int64_t& hi) {
    // valid ox: 0 <= ox*stride + kx - pad < W
    int64_t num = pad - kx;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    int64_t top = W - 1 - kx + pad;
    hi = top < 0 ? 0 : std::min(ow, top / stride + 1);
  };

#pragma omp parallel for collapse(2) if (B * Co > 1) schedule(static)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t oc = 0; oc < Co; ++oc) {
      double* yp = out.data() + (b * Co + oc) * oh * ow;
      for (int64_t ic = 0; ic < Ci; ++ic) {
        const double* xc = xp + (b * Ci + ic) * H * W;
        for (int64_t ky = 0; ky < kh; ++ky) {
          for (int64_t kx = 0; kx < kw; ++kx) {
            const double wv = kp[((oc * Ci + ic) * kh + ky) * kw + kx];
            int64_t lo, hi;
            ox_bounds(kx, lo, hi);
            for (int64_t oy = 0; oy < oh; ++oy) {
              const int64_t iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              const double* xrow = xc + iy * W + kx - pad;
              double* yrow = yp + oy * ow;
              if (stride == 1) {
                for (int64_t ox = lo; ox < hi; ++ox)
                  yrow[ox] += wv * xrow[ox];
              } else {
                for (int64_t ox = lo; ox < hi; ++ox)
                  yrow[ox] += wv * xrow[ox * stride];
              }
            }
          }
        }
      }
    }
  }

  return make_op(
      {B, Co, oh, ow}, std::move(out), {x, k},
      [x, k, B, Ci, H, W, Co, kh, kw, oh, ow, stride, pad](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* kp = k.data();
        const double* xp = x.data();
        auto ox_bounds = [&](int64_t kx, int64_t& lo, int64_t& hi) {
          int64_t num = pad - kx;
          lo = num <= 0 ? 0 : (num + stride - 1) / stride;
          int64_t top = W - 1 - kx + pad;
          hi = top < 0 ? 0 : std::min(ow, top / stride + 1);
        };
        if (x.requires_grad()) {
          double* dx = Tensor(x).grad_mutable();
#pragma omp parallel for collapse(2) if (B * Ci > 1) schedule(static)
          for (int64_t b = 0; b < B; ++b) {
            for (int64_t ic = 0; ic < Ci; ++ic) {
              double* dxc = dx + (b * Ci + ic) * H * W;
              for (int64_t oc = 0; oc < Co; ++oc) {
                const double* gc = g + (b * Co + oc) * oh * ow;
                for (int64_t ky = 0; ky < kh; ++ky) {
                  for (int64_t kx = 0; kx < kw; ++kx) {
                    const double wv = kp[((oc * Ci + ic) * kh + ky) * kw + kx];
                    int64_t lo, hi;
                    ox_bounds(kx, lo, hi);
                    for (int64_t oy = 0; oy < oh; ++oy) {
                      const int64_t iy = oy * stride + ky - pad;
                      if (iy < 0 || iy >= H) continue;
                      double* dxrow = dxc + iy * W + kx - pad;
                      const double* grow = gc + oy * ow;
                      if (stride == 1) {
                        for (int64_t ox = lo; ox < hi; ++ox)
                          dxrow[ox] += wv * grow[ox];
                      } else {
                        for (int64_t ox = lo; ox < hi; ++ox)
                          dxrow[ox * stride] += wv * grow[ox];
                      }
                    }
                  }
                }
              }
            }
          }
        }
        if (k.requires_grad()) {
          double* dk = Tensor(k).grad_mutable();
#pragma omp parallel for collapse(2) if (Co * Ci > 1) schedule(static)
          for (int64_t oc = 0; oc < Co; ++oc) {
            for (int64_t ic = 0; ic < Ci; ++ic) {
              for (int64_t ky = 0; ky < kh; ++ky) {
                for (int64_t kx = 0; kx < kw; ++kx) {
                  int64_t lo, hi;
                  ox_bounds(kx, lo, hi);
                  double acc = 0.0;
                  for (int64_t b = 0; b < B; ++b) {
                    const double* gc = g + (b * Co + oc) * oh * ow;
                    const double* xc = xp + (b * Ci + ic) * H * W;
                    for (int64_t oy = 0; oy < oh; ++oy) {
                      const int64_t iy = oy * stride + ky - pad;
                      if (iy < 0 || iy >= H) continue;
                      const double* xrow = xc + iy * W + kx - pad;
                      const double* grow = gc + oy * ow;
                      if (stride == 1) {
                        for (int64_t ox = lo; ox < hi; ++ox)
                          acc += grow[ox] * xrow[ox];
                      } else {
                        for (int64_t ox = lo; ox < hi; ++ox)
                          acc += grow[ox] * xrow[ox * stride];
                      }
                    }
                  }
                  dk[((oc * Ci + ic) * kh + ky) * kw + kx] += acc;
                }
              }
            }
          }
        }
      });
}

Tensor channel_bias_add(const Tensor& x, const Tensor& b) {
  check_shape(x.rank() >= 2, "channel_bias_add: rank < 2");
  const int64_t B = x.shape()[0], C = x.shape()[1];
  check_shape(b.rank() == 1 && b.shape()[0] == C,
              msg("channel_bias_add: bias must be [", C, "], got ",
                  shape_str(b.shape())));
  const int64_t M = x.numel() / (B * C);
  std::vector<double> out(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < B; ++i)
    for (int64_t c = 0; c < C; ++c) {
      const double bc = b.data()[c];
      const double* xr = x.data() + (i * C + c) * M;
      double* yr = out.data() + (i * C + c) * M;
      for (int64_t j = 0; j < M; ++j) yr[j] = xr[j] + bc;
    }
  return make_op(x.shape(), std::move(out), {x, b},
                 [x, b, B, C, M](TensorImpl& self) {
                   const double* g = self.grad.data();
                   if (x.requires_grad()) {
                     double* dx = Tensor(x).grad_mutable();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       dx[i] += g[i];
                   }
                   if (b.requires_grad()) {
                     double* db = Tensor(b).grad_mutable();
                     for (int64_t i = 0; i < B; ++i)
                       for (int64_t c = 0; c < C; ++c) {
                         const double* gr = g + (i * C + c) * M;
                         double acc = 0.0;
                         for (int64_t j = 0; j < M; ++j) acc += gr[j];
                         db[c] += acc;
                       }
                   }
                 });
}

Tensor global_avg_pool(const Tensor& x) {
  check_shape(x.rank() == 4, msg("global_avg_pool: input must be [B,C,h,w], got ",
                                 shape_str(x.shape())));
  const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  check_shape(H >= 1 && W >= 1, "global_avg_pool: empty spatial extent");
  const int64_t hw = H * W;
  std::vector<double> out(static_cast<size_t>(B * C));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const double* xr = x.data() + (b * C + c) * hw;
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) acc += xr[i];
      out[static_cast<size_t>(b * C + c)] = acc / static_cast<double>(hw);
    }
  return make_op({B, C}, std::move(out), {x},
                 [x, B, C, hw](TensorImpl& self) {
                   if (!x.requires_grad()) return;
                   double* dx = Tensor(x).grad_mutable();
                   const double* g = self.grad.data();
                   const double inv = 1.0 / static_cast<double>(hw);
                   for (int64_t b = 0; b < B; ++b)
                     for (int64_t c = 0; c < C; ++c) {
                       const double gv = g[b * C + c] * inv;
                       double* dxr = dx + (b * C + c) * hw;
                       for (int64_t i = 0; i < hw; ++i) dxr[i] += gv;
                     }
                 });
}

// ---------------------------------------------------------------- reductions

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
  return make_op({1}, {acc}, {a}, [a](TensorImpl& self) {
    if (!a.requires_grad()) return;
    double* da = Tensor(a).grad_mutable();
    const double g = self.grad[0];
    for (int64_t i = 0; i < Tensor(a).numel(); ++i) da[i] += g;
  });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
  return make_op({1}, {acc * inv}, {a}, [a, inv](TensorImpl& self) {
    if (!a.requires_grad()) return;
    double* da = Tensor(a).grad_mutable();
    const double g = self.grad[0] * inv;
    for (int64_t i = 0; i < Tensor(a).numel(); ++i) da[i] += g;
  });
}

namespace {
Tensor reduce_axis(const Tensor& a, int64_t axis, bool mean) {
  axis = normalize_axis(axis, a.rank(), mean ? "mean_axis" : "sum_axis");
  const int64_t extent = a.shape()[static_cast<size_t>(axis)];
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= a.shape()[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < a.rank(); ++i)
    inner *= a.shape()[static_cast<size_t>(i)];
  Shape out_shape;
  for (int64_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[static_cast<size_t>(i)]);
  if (out_shape.empty()) out_shape.push_back(1);

  const double w = mean ? 1.0 / static_cast<double>(extent) : 1.0;
  std::vector<double> out(static_cast<size_t>(outer * inner), 0.0);
  const double* x = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t e = 0; e < extent; ++e) {
      const double* xr = x + (o * extent + e) * inner;
      double* yr = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) yr[i] += xr[i];
    }
  if (mean)
    for (double& v : out) v *= w;

  return make_op(std::move(out_shape), std::move(out), {a},
                 [a, outer, inner, extent, w](TensorImpl& self) {
                   if (!a.requires_grad()) return;
                   double* da = Tensor(a).grad_mutable();
                   const double* g = self.grad.data();
                   for (int64_t o = 0; o < outer; ++o)
                     for (int64_t e = 0; e < extent; ++e) {
                       double* dar = da + (o * extent + e) * inner;
                       const double* gr = g + o * inner;
                       for (int64_t i = 0; i < inner; ++i)
                         dar[i] += gr[i] * w;
                     }
                 });
}
}  // namespace

Tensor sum_axis(const Tensor& a, int64_t axis) {
  return reduce_axis(a, axis, false);
}
Tensor mean_axis(const Tensor& a, int64_t axis) {
  return reduce_axis(a, axis, true);
}

// ------------------------------------------------------------------ patchify

Tensor patchify(const Tensor& x, int64_t patch) {
  check_shape(x.rank() == 4, msg("patchify: input must be [B,C,S,S], got ",
                                 shape_str(x.shape())));
  const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  check_shape(H == W, msg("patchify: input must be square, got ", H, "x", W));
  check_shape(patch >= 1 && H % patch == 0,
              msg("patchify: side ", H, " not divisible by patch ", patch));
  const int64_t N = H / patch;
  const int64_t F = C * patch * patch;

  std::vector<double> out(static_cast<size_t>(B * N * N * F));
  const double* xp = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t pr = 0; pr < N; ++pr)
      for (int64_t pc = 0; pc < N; ++pc) {
        double* tok = out.data() + ((b * N + pr) * N + pc) * F;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t dy = 0; dy < patch; ++dy) {
            const double* src =
                xp + ((b * C + c) * H + pr * patch + dy) * W + pc * patch;
            double* dst = tok + (c * patch + dy) * patch;
            std::memcpy(dst, src, static_cast<size_t>(patch) * sizeof(double));
          }
      }

  return make_op(
      {B, N * N, F}, std::move(out), {x},
      [x, B, C, H, W, N, patch, F](TensorImpl& self) {
        if (!x.requires_grad()) return;
        double* dx = Tensor(x).grad_mutable();
        const double* g = self.grad.data();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t pr = 0; pr < N; ++pr)
            for (int64_t pc = 0; pc < N; ++pc) {
              const double* tok = g + ((b * N + pr) * N + pc) * F;
              for (int64_t c = 0; c < C; ++c)
                for (int64_t dy = 0; dy < patch; ++dy) {
                  double* dst = dx + ((b * C + c) * H + pr * patch + dy) * W +
                                pc * patch;
                  const double* src = tok + (c * patch + dy) * patch;
                  for (int64_t dxi = 0; dxi < patch; ++dxi)
                    dst[dxi] += src[dxi];
                }
            }
      });
}

// -------------------------------------------------------------------- losses

Tensor sigmoid_bce_with_logits(const Tensor& scores, const Tensor& labels) {
  check_same_shape(scores, labels, "sigmoid_bce_with_logits");
  const int64_t n = scores.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double y = labels.data()[i];
    if (y != 0.0 && y != 1.0)
      throw ContractError(
          msg("sigmoid_bce_with_logits: label at ", i, " is ", y,
              ", must be exactly 0 or 1"));
  }
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double s = scores.data()[i];
    const double y = labels.data()[i];
    acc += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::fabs(s)));
  }
  const double inv = 1.0 / static_cast<double>(n);
  return make_op(
      {1}, {acc * inv}, {scores, labels},
      [scores, labels, n, inv](TensorImpl& self) {
        if (!scores.requires_grad()) return;
        double* ds = Tensor(scores).grad_mutable();
        const double g = self.grad[0] * inv;
        for (int64_t i = 0; i < n; ++i) {
          const double s = scores.data()[i];
          const double sig =
              s >= 0.0 ? 1.0 / (1.0 + std::exp(-s))
                       : std::exp(s) / (1.0 + std::exp(s));
          ds[i] += g * (sig - labels.data()[i]);
        }
      });
}

}  // namespace crt
