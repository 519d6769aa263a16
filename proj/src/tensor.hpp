#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace moaecr {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the eagerly built reverse-mode graph. `backprop` reads the
// node's own grad and accumulates into the parents' grads.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad();
};

// Value-semantics handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int64_t dim(int i) const;  // negative indices allowed
  int64_t numel() const { return n_->numel(); }

  std::span<const double> data() const { return {n_->value.data(), n_->value.size()}; }
  std::span<double> data_mut() { return {n_->value.data(), n_->value.size()}; }
  double item() const;
  double at(std::initializer_list<int64_t> idx) const;

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool rg);
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();
  bool all_finite() const;

  std::shared_ptr<TensorNode> node() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

// Thread-local switch: when off, ops do not record graph nodes (pure forward).
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();

 private:
  bool prev_;
};

// ---- primitives ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // rank-2
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor sum(const Tensor& a, const std::vector<int>& axes, bool keepdim = false);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<int>& axes, bool keepdim = false);
Tensor mean(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);
Tensor logsumexp(const Tensor& a, int axis, bool keepdim = false);

Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor hinge(const Tensor& a, double threshold);  // max(x - t, 0)
Tensor relu(const Tensor& a);

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& rows);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);
Tensor operator/(double a, const Tensor& b);

// ---- compositions ----------------------------------------------------

Tensor l2_normalize_rows(const Tensor& a);                   // along last axis
Tensor split_heads(const Tensor& x, int h);                  // [n,p,d] -> [n,h,p,d/h]
Tensor merge_heads(const Tensor& x);                         // [n,h,p,dh] -> [n,p,h*dh]
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);                        // over last axis

// ---- backward --------------------------------------------------------

// Reverse topological sweep from a scalar root. Leaf grads accumulate
// across calls; intermediate grads are reset per sweep.
void backward(const Tensor& loss);

// ---- gradient checking -----------------------------------------------

struct GradcheckResult {
  bool pass = true;
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;
  std::vector<std::string> notes;  // skipped coordinates, failures, NaNs
  std::string summary() const;
};

// Central-difference Jacobian of a scalar-valued f against the autodiff
// gradient, coordinate by coordinate over every input. Coordinates where the
// one-sided differences disagree (a hinge/abs/max tie) are skipped and
// reported. Mixed error metric: |ad - fd| / max(|ad|, |fd|, 1).
// fault_bias is a test fixture: it is added to the recorded analytic
// derivative of the first coordinate, standing in for a broken backward
// rule, so detection plumbing can be exercised.
GradcheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                          std::vector<Tensor> inputs, double eps = 1e-5,
                          double tol = 1e-4, double fault_bias = 0.0);

}  // namespace moaecr
