#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace moaecr {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + ")";
}

static void check_shape_valid(const Shape& s) {
  for (auto d : s)
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
}

void TensorNode::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

// ---- grad mode ---------------------------------------------------------

static thread_local bool t_grad_enabled = true;

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

// ---- Tensor ------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape_valid(shape);
  auto n = std::make_shared<TensorNode>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.n_->value.begin(), t.n_->value.end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape_valid(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

int64_t Tensor::dim(int i) const {
  int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw ShapeError("axis out of range for shape " + shape_str(shape()));
  return n_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item(): tensor with shape " + shape_str(shape()) + " is not a scalar");
  return n_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw ShapeError("at(): index rank mismatch for shape " + shape_str(shape()));
  int64_t off = 0;
  int k = 0;
  for (auto i : idx) {
    if (i < 0 || i >= n_->shape[static_cast<size_t>(k)])
      throw ShapeError("at(): index out of range for shape " + shape_str(shape()));
    off = off * n_->shape[static_cast<size_t>(k)] + i;
    ++k;
  }
  return n_->value[static_cast<size_t>(off)];
}

Tensor& Tensor::set_requires_grad(bool rg) {
  n_->requires_grad = rg;
  return *this;
}

std::span<const double> Tensor::grad() const { return {n_->grad.data(), n_->grad.size()}; }

std::span<double> Tensor::grad_mut() {
  n_->ensure_grad();
  return {n_->grad.data(), n_->grad.size()};
}

void Tensor::zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : n_->value)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- op plumbing -------------------------------------------------------

static Tensor make_op(const char* name, Shape shape, std::vector<double> value,
                      std::initializer_list<Tensor> parents,
                      std::function<void(TensorNode&)> bp) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = name;
  bool rg = false;
  if (t_grad_enabled)
    for (const auto& p : parents) rg = rg || p.node()->requires_grad;
  if (rg) {
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(bp);
  }
  return Tensor(std::move(n));
}

static Shape broadcast_shape(const Shape& a, const Shape& b, const char* opname) {
  size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  Shape out(r);
  for (size_t k = 0; k < r; ++k) {
    int64_t da = k < r - ra ? 1 : a[k - (r - ra)];
    int64_t db = k < r - rb ? 1 : b[k - (r - rb)];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(opname) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " are not broadcast-compatible");
    out[k] = std::max(da, db);
  }
  return out;
}

// row-major strides of `in` aligned to `out` rank, 0 on broadcast axes
static std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  size_t ri = in.size(), ro = out.size();
  std::vector<int64_t> st(ro, 0);
  int64_t acc = 1;
  for (size_t k = ri; k-- > 0;) {
    st[k + (ro - ri)] = (in[k] == 1 ? 0 : acc);
    acc *= in[k];
  }
  return st;
}

template <class Body>
static void bcast_foreach(const Shape& ashape, const Shape& bshape, const Shape& out,
                          Body body) {
  auto sa = broadcast_strides(ashape, out);
  auto sb = broadcast_strides(bshape, out);
  int64_t n = shape_numel(out);
  size_t r = out.size();
  std::vector<int64_t> ix(r, 0);
  int64_t offa = 0, offb = 0;
  for (int64_t i = 0;;) {
    body(i, offa, offb);
    if (++i >= n) break;
    for (size_t k = r; k-- > 0;) {
      ++ix[k];
      offa += sa[k];
      offb += sb[k];
      if (ix[k] < out[k]) break;
      offa -= sa[k] * out[k];
      offb -= sb[k] * out[k];
      ix[k] = 0;
    }
  }
}

template <class F, class DFa, class DFb>
static Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DFa dfa,
                        DFb dfb) {
  Shape out = broadcast_shape(a.shape(), b.shape(), name);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> val(static_cast<size_t>(shape_numel(out)));
  if (a.shape() == out && b.shape() == out) {
    for (size_t i = 0; i < val.size(); ++i) val[i] = f(av[i], bv[i]);
  } else {
    bcast_foreach(a.shape(), b.shape(), out, [&](int64_t i, int64_t oa, int64_t ob) {
      val[static_cast<size_t>(i)] = f(av[static_cast<size_t>(oa)], bv[static_cast<size_t>(ob)]);
    });
  }
  return make_op(name, std::move(out), std::move(val), {a, b},
                 [f, dfa, dfb](TensorNode& self) {
                   TensorNode& A = *self.parents[0];
                   TensorNode& B = *self.parents[1];
                   bool ga = A.requires_grad, gb = B.requires_grad;
                   if (ga) A.ensure_grad();
                   if (gb) B.ensure_grad();
                   bcast_foreach(A.shape, B.shape, self.shape,
                                 [&](int64_t i, int64_t oa, int64_t ob) {
                                   double g = self.grad[static_cast<size_t>(i)];
                                   double x = A.value[static_cast<size_t>(oa)];
                                   double y = B.value[static_cast<size_t>(ob)];
                                   if (ga) A.grad[static_cast<size_t>(oa)] += dfa(x, y) * g;
                                   if (gb) B.grad[static_cast<size_t>(ob)] += dfb(x, y) * g;
                                 });
                 });
}

// df receives (input, output)
template <class F, class DF>
static Tensor unary_op(const char* name, const Tensor& a, F f, DF df) {
  const auto& av = a.node()->value;
  std::vector<double> val(av.size());
  for (size_t i = 0; i < av.size(); ++i) val[i] = f(av[i]);
  return make_op(name, a.shape(), std::move(val), {a}, [df](TensorNode& self) {
    TensorNode& A = *self.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (size_t i = 0; i < A.grad.size(); ++i)
      A.grad[i] += df(A.value[i], self.value[i]) * self.grad[i];
  });
}

// ---- elementwise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor operator+(const Tensor& a, double b) {
  return unary_op(
      "add_scalar", a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}
Tensor operator+(double a, const Tensor& b) { return b + a; }
Tensor operator-(const Tensor& a, double b) { return a + (-b); }
Tensor operator-(double a, const Tensor& b) {
  return unary_op(
      "rsub_scalar", b, [a](double x) { return a - x; },
      [](double, double) { return -1.0; });
}
Tensor operator*(const Tensor& a, double b) {
  return unary_op(
      "mul_scalar", a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}
Tensor operator*(double a, const Tensor& b) { return b * a; }
Tensor operator/(const Tensor& a, double b) { return a * (1.0 / b); }
Tensor operator/(double a, const Tensor& b) {
  return unary_op(
      "rdiv_scalar", b, [a](double x) { return a / x; },
      [a](double x, double) { return -a / (x * x); });
}

Tensor abs(const Tensor& a) {
  // subgradient at 0 is 0
  return unary_op(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  // derivative at 0 defined as 0 to keep gradients finite
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor hinge(const Tensor& a, double threshold) {
  // max(x - t, 0); subgradient at the kink is 0
  return unary_op(
      "hinge", a, [threshold](double x) { return x > threshold ? x - threshold : 0.0; },
      [threshold](double x, double) { return x > threshold ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& a) { return hinge(a, 0.0); }

// ---- matmul ------------------------------------------------------------

// C[i,k] += A[i,j] * B[j,k]
static void gemm_nn(const double* A, const double* B, double* C, int64_t I, int64_t J,
                    int64_t K) {
  for (int64_t i = 0; i < I; ++i) {
    const double* Ai = A + i * J;
    double* Ci = C + i * K;
    for (int64_t j = 0; j < J; ++j) {
      double aij = Ai[j];
      if (aij == 0.0) continue;
      const double* Bj = B + j * K;
      for (int64_t k = 0; k < K; ++k) Ci[k] += aij * Bj[k];
    }
  }
}

// C[i,j] += sum_k A[i,k] * B[j,k]
static void gemm_nt(const double* A, const double* B, double* C, int64_t I, int64_t K,
                    int64_t J) {
  for (int64_t i = 0; i < I; ++i) {
    const double* Ai = A + i * K;
    double* Ci = C + i * J;
    for (int64_t j = 0; j < J; ++j) {
      const double* Bj = B + j * K;
      double s = 0.0;
      for (int64_t k = 0; k < K; ++k) s += Ai[k] * Bj[k];
      Ci[j] += s;
    }
  }
}

// C[j,k] += sum_i A[i,j] * B[i,k]
static void gemm_tn(const double* A, const double* B, double* C, int64_t J, int64_t I,
                    int64_t K) {
  for (int64_t i = 0; i < I; ++i) {
    const double* Ai = A + i * J;
    const double* Bi = B + i * K;
    for (int64_t j = 0; j < J; ++j) {
      double aij = Ai[j];
      if (aij == 0.0) continue;
      double* Cj = C + j * K;
      for (int64_t k = 0; k < K; ++k) Cj[k] += aij * Bi[k];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  int64_t I = as[as.size() - 2], J = as[as.size() - 1];
  int64_t Jb = bs[bs.size() - 2], K = bs[bs.size() - 1];
  if (J != Jb)
    throw ShapeError("matmul: inner dimensions disagree between " + shape_str(as) +
                     " and " + shape_str(bs));
  bool shared_b = (b.rank() == 2 && a.rank() > 2);
  if (!shared_b && a.rank() != b.rank())
    throw ShapeError("matmul: rank mismatch between " + shape_str(as) + " and " +
                     shape_str(bs));
  if (!shared_b)
    for (size_t k = 0; k + 2 < as.size(); ++k)
      if (as[k] != bs[k])
        throw ShapeError("matmul: batch dimensions disagree between " + shape_str(as) +
                         " and " + shape_str(bs));
  int64_t batch = 1;
  for (size_t k = 0; k + 2 < as.size(); ++k) batch *= as[k];

  Shape out(as.begin(), as.end() - 2);
  out.push_back(I);
  out.push_back(K);
  std::vector<double> val(static_cast<size_t>(batch * I * K), 0.0);
  const double* A = a.node()->value.data();
  const double* B = b.node()->value.data();
  for (int64_t g = 0; g < batch; ++g)
    gemm_nn(A + g * I * J, B + (shared_b ? 0 : g * J * K), val.data() + g * I * K, I, J, K);

  return make_op("matmul", std::move(out), std::move(val), {a, b},
                 [I, J, K, batch, shared_b](TensorNode& self) {
                   TensorNode& An = *self.parents[0];
                   TensorNode& Bn = *self.parents[1];
                   const double* g = self.grad.data();
                   if (An.requires_grad) {
                     An.ensure_grad();
                     for (int64_t q = 0; q < batch; ++q)
                       gemm_nt(g + q * I * K, Bn.value.data() + (shared_b ? 0 : q * J * K),
                               An.grad.data() + q * I * J, I, K, J);
                   }
                   if (Bn.requires_grad) {
                     Bn.ensure_grad();
                     for (int64_t q = 0; q < batch; ++q)
                       gemm_tn(An.value.data() + q * I * J, g + q * I * K,
                               Bn.grad.data() + (shared_b ? 0 : q * J * K), J, I, K);
                   }
                 });
}

// ---- data movement -----------------------------------------------------

static std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t k = s.size(); k-- > 0;) {
    st[k] = acc;
    acc *= s[k];
  }
  return st;
}

// iterate out linear index i with mapped input offset (strides given in out order)
template <class Body>
static void strided_foreach(const Shape& out, const std::vector<int64_t>& strides, Body body) {
  int64_t n = shape_numel(out);
  size_t r = out.size();
  std::vector<int64_t> ix(r, 0);
  int64_t off = 0;
  for (int64_t i = 0;;) {
    body(i, off);
    if (++i >= n) break;
    for (size_t k = r; k-- > 0;) {
      ++ix[k];
      off += strides[k];
      if (ix[k] < out[k]) break;
      off -= strides[k] * out[k];
      ix[k] = 0;
    }
  }
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  int r = a.rank();
  if (static_cast<int>(axes.size()) != r)
    throw ShapeError("permute: axes count does not match rank of " + shape_str(a.shape()));
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= r || seen[static_cast<size_t>(ax)])
      throw ShapeError("permute: invalid axis permutation for " + shape_str(a.shape()));
    seen[static_cast<size_t>(ax)] = true;
  }
  Shape out(static_cast<size_t>(r));
  auto ist = row_major_strides(a.shape());
  std::vector<int64_t> mapped(static_cast<size_t>(r));
  for (int k = 0; k < r; ++k) {
    out[static_cast<size_t>(k)] = a.shape()[static_cast<size_t>(axes[static_cast<size_t>(k)])];
    mapped[static_cast<size_t>(k)] = ist[static_cast<size_t>(axes[static_cast<size_t>(k)])];
  }
  const auto& av = a.node()->value;
  std::vector<double> val(av.size());
  strided_foreach(out, mapped,
                  [&](int64_t i, int64_t off) { val[static_cast<size_t>(i)] = av[static_cast<size_t>(off)]; });
  Shape out_copy = out;
  return make_op("permute", std::move(out_copy), std::move(val), {a},
                 [out, mapped](TensorNode& self) {
                   TensorNode& A = *self.parents[0];
                   if (!A.requires_grad) return;
                   A.ensure_grad();
                   strided_foreach(out, mapped, [&](int64_t i, int64_t off) {
                     A.grad[static_cast<size_t>(off)] += self.grad[static_cast<size_t>(i)];
                   });
                 });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape_valid(shape);
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> val(a.node()->value);
  return make_op("reshape", std::move(shape), std::move(val), {a}, [](TensorNode& self) {
    TensorNode& A = *self.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += self.grad[i];
  });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  Shape out = broadcast_shape(a.shape(), shape, "broadcast_to");
  if (out != shape)
    throw ShapeError("broadcast_to: " + shape_str(a.shape()) + " does not broadcast to " +
                     shape_str(shape));
  const auto& av = a.node()->value;
  std::vector<double> val(static_cast<size_t>(shape_numel(out)));
  auto st = broadcast_strides(a.shape(), out);
  strided_foreach(out, st,
                  [&](int64_t i, int64_t off) { val[static_cast<size_t>(i)] = av[static_cast<size_t>(off)]; });
  Shape out_copy = out;
  return make_op("broadcast_to", std::move(out_copy), std::move(val), {a},
                 [out, st](TensorNode& self) {
                   TensorNode& A = *self.parents[0];
                   if (!A.requires_grad) return;
                   A.ensure_grad();
                   strided_foreach(out, st, [&](int64_t i, int64_t off) {
                     A.grad[static_cast<size_t>(off)] += self.grad[static_cast<size_t>(i)];
                   });
                 });
}

Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len) {
  int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("narrow: axis out of range for " + shape_str(a.shape()));
  int64_t D = a.shape()[static_cast<size_t>(axis)];
  if (len < 1 || start < 0 || start + len > D)
    throw ShapeError("narrow: slice [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of range for axis " +
                     std::to_string(axis) + " of " + shape_str(a.shape()));
  int64_t outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= a.shape()[static_cast<size_t>(k)];
  for (int k = axis + 1; k < r; ++k) inner *= a.shape()[static_cast<size_t>(k)];
  Shape out = a.shape();
  out[static_cast<size_t>(axis)] = len;
  const auto& av = a.node()->value;
  std::vector<double> val(static_cast<size_t>(outer * len * inner));
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(av.data() + (o * D + start) * inner, len * inner,
                val.data() + o * len * inner);
  return make_op("narrow", std::move(out), std::move(val), {a},
                 [outer, inner, D, start, len](TensorNode& self) {
                   TensorNode& A = *self.parents[0];
                   if (!A.requires_grad) return;
                   A.ensure_grad();
                   for (int64_t o = 0; o < outer; ++o) {
                     const double* g = self.grad.data() + o * len * inner;
                     double* dst = A.grad.data() + (o * D + start) * inner;
                     for (int64_t i = 0; i < len * inner; ++i) dst[i] += g[i];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no tensors given");
  int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("concat: axis out of range for " + shape_str(parts[0].shape()));
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r)
      throw ShapeError("concat: rank mismatch between " + shape_str(parts[0].shape()) +
                       " and " + shape_str(p.shape()));
    for (int k = 0; k < r; ++k)
      if (k != axis && p.shape()[static_cast<size_t>(k)] != parts[0].shape()[static_cast<size_t>(k)])
        throw ShapeError("concat: shape mismatch between " + shape_str(parts[0].shape()) +
                         " and " + shape_str(p.shape()));
    total += p.shape()[static_cast<size_t>(axis)];
  }
  Shape out = parts[0].shape();
  out[static_cast<size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= out[static_cast<size_t>(k)];
  for (int k = axis + 1; k < r; ++k) inner *= out[static_cast<size_t>(k)];

  std::vector<double> val(static_cast<size_t>(outer * total * inner));
  std::vector<int64_t> lens;
  int64_t pos = 0;
  for (const auto& p : parts) {
    int64_t len = p.shape()[static_cast<size_t>(axis)];
    lens.push_back(len);
    const auto& pv = p.node()->value;
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * len * inner, len * inner,
                  val.data() + (o * total + pos) * inner);
    pos += len;
  }

  auto n = std::make_shared<TensorNode>();
  n->shape = out;
  n->value = std::move(val);
  n->op = "concat";
  bool rg = false;
  if (t_grad_enabled)
    for (const auto& p : parts) rg = rg || p.requires_grad();
  if (rg) {
    n->requires_grad = true;
    for (const auto& p : parts) n->parents.push_back(p.node());
    n->backprop = [outer, inner, total, lens](TensorNode& self) {
      int64_t pos2 = 0;
      for (size_t pi = 0; pi < self.parents.size(); ++pi) {
        TensorNode& P = *self.parents[pi];
        int64_t len = lens[pi];
        if (P.requires_grad) {
          P.ensure_grad();
          for (int64_t o = 0; o < outer; ++o) {
            const double* g = self.grad.data() + (o * total + pos2) * inner;
            double* dst = P.grad.data() + o * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += g[i];
          }
        }
        pos2 += len;
      }
    };
  }
  return Tensor(std::move(n));
}

// ---- reductions --------------------------------------------------------

static std::vector<int> normalize_axes(const std::vector<int>& axes, int rank,
                                       const Shape& shape) {
  std::vector<int> out;
  for (int ax : axes) {
    if (ax < 0) ax += rank;
    if (ax < 0 || ax >= rank)
      throw ShapeError("reduction axis out of range for " + shape_str(shape));
    out.push_back(ax);
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end())
    throw ShapeError("duplicate reduction axis for " + shape_str(shape));
  return out;
}

Tensor sum(const Tensor& a, const std::vector<int>& axes, bool keepdim) {
  auto ax = normalize_axes(axes, a.rank(), a.shape());
  std::vector<bool> reduced(static_cast<size_t>(a.rank()), false);
  for (int k : ax) reduced[static_cast<size_t>(k)] = true;

  Shape out;
  for (int k = 0; k < a.rank(); ++k) {
    if (reduced[static_cast<size_t>(k)]) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(a.shape()[static_cast<size_t>(k)]);
    }
  }
  // strides into the output, indexed by input axes; 0 on reduced axes
  std::vector<int64_t> ost(static_cast<size_t>(a.rank()), 0);
  int64_t acc = 1;
  for (int k = a.rank(); k-- > 0;) {
    if (!reduced[static_cast<size_t>(k)]) {
      ost[static_cast<size_t>(k)] = acc;
      acc *= a.shape()[static_cast<size_t>(k)];
    }
  }
  const auto& av = a.node()->value;
  std::vector<double> val(static_cast<size_t>(shape_numel(out)), 0.0);
  const Shape& in_shape = a.shape();
  strided_foreach(in_shape, ost, [&](int64_t i, int64_t off) {
    val[static_cast<size_t>(off)] += av[static_cast<size_t>(i)];
  });
  return make_op("sum", std::move(out), std::move(val), {a}, [in_shape, ost](TensorNode& self) {
    TensorNode& A = *self.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    strided_foreach(in_shape, ost, [&](int64_t i, int64_t off) {
      A.grad[static_cast<size_t>(i)] += self.grad[static_cast<size_t>(off)];
    });
  });
}

Tensor sum(const Tensor& a) {
  std::vector<int> axes(static_cast<size_t>(a.rank()));
  for (int k = 0; k < a.rank(); ++k) axes[static_cast<size_t>(k)] = k;
  return sum(a, axes, false);
}

Tensor mean(const Tensor& a, const std::vector<int>& axes, bool keepdim) {
  Tensor s = sum(a, axes, keepdim);
  double count = static_cast<double>(a.numel()) / static_cast<double>(s.numel());
  return s * (1.0 / count);
}

Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.numel())); }

// ---- softmax / logsumexp -----------------------------------------------

struct LaneSplit {
  int64_t outer, len, inner;
};

static LaneSplit lane_split(const Shape& s, int& axis) {
  int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("axis out of range for " + shape_str(s));
  LaneSplit ls{1, s[static_cast<size_t>(axis)], 1};
  for (int k = 0; k < axis; ++k) ls.outer *= s[static_cast<size_t>(k)];
  for (int k = axis + 1; k < r; ++k) ls.inner *= s[static_cast<size_t>(k)];
  return ls;
}

Tensor softmax(const Tensor& a, int axis) {
  auto ls = lane_split(a.shape(), axis);
  const auto& av = a.node()->value;
  std::vector<double> val(av.size());
  for (int64_t o = 0; o < ls.outer; ++o)
    for (int64_t in = 0; in < ls.inner; ++in) {
      int64_t base = o * ls.len * ls.inner + in;
      double m = av[static_cast<size_t>(base)];
      for (int64_t t = 1; t < ls.len; ++t)
        m = std::max(m, av[static_cast<size_t>(base + t * ls.inner)]);
      double s = 0.0;
      for (int64_t t = 0; t < ls.len; ++t) {
        double e = std::exp(av[static_cast<size_t>(base + t * ls.inner)] - m);
        val[static_cast<size_t>(base + t * ls.inner)] = e;
        s += e;
      }
      for (int64_t t = 0; t < ls.len; ++t) val[static_cast<size_t>(base + t * ls.inner)] /= s;
    }
  return make_op("softmax", a.shape(), std::move(val), {a}, [ls](TensorNode& self) {
    TensorNode& A = *self.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (int64_t o = 0; o < ls.outer; ++o)
      for (int64_t in = 0; in < ls.inner; ++in) {
        int64_t base = o * ls.len * ls.inner + in;
        double dot = 0.0;
        for (int64_t t = 0; t < ls.len; ++t) {
          size_t ix = static_cast<size_t>(base + t * ls.inner);
          dot += self.grad[ix] * self.value[ix];
        }
        for (int64_t t = 0; t < ls.len; ++t) {
          size_t ix = static_cast<size_t>(base + t * ls.inner);
          A.grad[ix] += self.value[ix] * (self.grad[ix] - dot);
        }
      }
  });
}

Tensor logsumexp(const Tensor& a, int axis, bool keepdim) {
  auto ls = lane_split(a.shape(), axis);
  if (ls.len < 1) throw UsageError("logsumexp: empty reduction axis");
  const auto& av = a.node()->value;
  Shape out;
  for (int k = 0; k < a.rank(); ++k) {
    int64_t d = a.shape()[static_cast<size_t>(k)];
    int64_t lane_axis = axis;  // already normalized by lane_split
    if (k == lane_axis) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(d);
    }
  }
  std::vector<double> val(static_cast<size_t>(ls.outer * ls.inner));
  for (int64_t o = 0; o < ls.outer; ++o)
    for (int64_t in = 0; in < ls.inner; ++in) {
      int64_t base = o * ls.len * ls.inner + in;
      double m = av[static_cast<size_t>(base)];
      for (int64_t t = 1; t < ls.len; ++t)
        m = std::max(m, av[static_cast<size_t>(base + t * ls.inner)]);
      double s = 0.0;
      for (int64_t t = 0; t < ls.len; ++t)
        s += std::exp(av[static_cast<size_t>(base + t * ls.inner)] - m);
      val[static_cast<size_t>(o * ls.inner + in)] = m + std::log(s);
    }
  return make_op("logsumexp", std::move(out), std::move(val), {a}, [ls](TensorNode& self) {
    TensorNode& A = *self.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (int64_t o = 0; o < ls.outer; ++o)
      for (int64_t in = 0; in < ls.inner; ++in) {
        int64_t base = o * ls.len * ls.inner + in;
        size_t lane = static_cast<size_t>(o * ls.inner + in);
        double y = self.value[lane];
        double g = self.grad[lane];
        for (int64_t t = 0; t < ls.len; ++t) {
          size_t ix = static_cast<size_t>(base + t * ls.inner);
          A.grad[ix] += g * std::exp(A.value[ix] - y);
        }
      }
  });
}

// ---- gather ------------------------------------------------------------

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& rows) {
  if (a.rank() != 2) throw ShapeError("gather_rows: expected rank 2, got " + shape_str(a.shape()));
  int64_t m = a.dim(0), k = a.dim(1);
  for (int64_t r : rows)
    if (r < 0 || r >= m)
      throw UsageError("gather_rows: row index " + std::to_string(r) +
                       " out of range for " + shape_str(a.shape()));
  int64_t n = static_cast<int64_t>(rows.size());
  const auto& av = a.node()->value;
  std::vector<double> val(static_cast<size_t>(n * k));
  for (int64_t i = 0; i < n; ++i)
    std::copy_n(av.data() + rows[static_cast<size_t>(i)] * k, k, val.data() + i * k);
  return make_op("gather_rows", {n, k}, std::move(val), {a}, [rows, k](TensorNode& self) {
    TensorNode& A = *self.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (size_t i = 0; i < rows.size(); ++i) {
      const double* g = self.grad.data() + static_cast<int64_t>(i) * k;
      double* dst = A.grad.data() + rows[i] * k;
      for (int64_t j = 0; j < k; ++j) dst[j] += g[j];
    }
  });
}

// ---- compositions ------------------------------------------------------

Tensor l2_normalize_rows(const Tensor& a) {
  Tensor n = sqrt(sum(square(a), {-1}, true));
  return a / n;
}

Tensor split_heads(const Tensor& x, int h) {
  if (x.rank() != 3) throw ShapeError("split_heads: expected [n,p,d], got " + shape_str(x.shape()));
  int64_t n = x.dim(0), p = x.dim(1), d = x.dim(2);
  if (h < 1 || d % h != 0)
    throw ConfigError("split_heads: width " + std::to_string(d) +
                      " not divisible by head count " + std::to_string(h));
  Tensor r = reshape(x, {n, p, h, d / h});
  return permute(r, {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("merge_heads: expected [n,h,p,dh], got " + shape_str(x.shape()));
  int64_t n = x.dim(0), h = x.dim(1), p = x.dim(2), dh = x.dim(3);
  Tensor r = permute(x, {0, 2, 1, 3});
  return reshape(r, {n, p, h * dh});
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  Tensor mu = mean(x, {-1}, true);
  Tensor xc = x - mu;
  Tensor var = mean(square(xc), {-1}, true);
  Tensor inv = 1.0 / sqrt(var + eps);
  return xc * inv * gamma + beta;
}

// ---- backward ----------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward: root must be a scalar tensor");
  auto root = loss.node();
  if (!root->requires_grad) return;

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  // interior grads reset each sweep; leaf grads accumulate across sweeps
  for (TensorNode* n : order)
    if (n->backprop) {
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---- gradcheck ---------------------------------------------------------

std::string GradcheckResult::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s: max_rel_err=%.3g checked=%lld skipped=%lld",
                pass ? "pass" : "FAIL", max_rel_err, static_cast<long long>(checked),
                static_cast<long long>(skipped));
  std::string s(buf);
  for (const auto& n : notes) s += "\n  " + n;
  return s;
}

GradcheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                          std::vector<Tensor> inputs, double eps, double tol,
                          double fault_bias) {
  GradcheckResult res;
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  Tensor out = f(inputs);
  if (out.numel() != 1) throw UsageError("gradcheck: f must return a scalar");
  double f0 = out.item();
  if (!std::isfinite(f0)) {
    res.pass = false;
    res.notes.push_back("f(x) is not finite at the base point");
    return res;
  }
  backward(out);
  std::vector<std::vector<double>> ad;
  for (auto& x : inputs) ad.emplace_back(x.grad().begin(), x.grad().end());
  if (fault_bias != 0.0 && !ad.empty() && !ad[0].empty()) {
    ad[0][0] += fault_bias;
  }

  NoGradGuard ng;
  auto eval = [&]() { return f(inputs).item(); };
  char note[192];
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    auto buf = inputs[ti].data_mut();
    for (size_t i = 0; i < buf.size(); ++i) {
      double v = buf[i];
      buf[i] = v + eps;
      double fp = eval();
      buf[i] = v - eps;
      double fm = eval();
      buf[i] = v;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        res.pass = false;
        std::snprintf(note, sizeof(note), "NaN in f(x) near input %zu coordinate %zu", ti, i);
        res.notes.push_back(note);
        continue;
      }
      double fwd = (fp - f0) / eps;
      double bwd = (f0 - fm) / eps;
      if (std::abs(fwd - bwd) > 1e-3 * std::max({1.0, std::abs(fwd), std::abs(bwd)})) {
        ++res.skipped;
        std::snprintf(note, sizeof(note),
                      "non-differentiable point, skipped coordinate (input %zu, coordinate %zu)",
                      ti, i);
        res.notes.push_back(note);
        continue;
      }
      double fd = (fp - fm) / (2.0 * eps);
      double g = ad[ti].empty() ? 0.0 : ad[ti][i];
      double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1.0});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
      if (rel >= tol) {
        res.pass = false;
        std::snprintf(note, sizeof(note),
                      "gradient mismatch at input %zu coordinate %zu: ad=%.10g fd=%.10g rel=%.3g",
                      ti, i, g, fd, rel);
        res.notes.push_back(note);
      }
    }
  }
  return res;
}

}  // namespace moaecr
