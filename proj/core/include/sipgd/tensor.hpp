#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sipgd {

using Shape = std::vector<int>;

namespace detail {

// One recorded node of the computation graph. Nodes are created in program
// order; every node's parents were created before it, so descending id is a
// valid topological order for the backward sweep.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward()
  bool needs_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backfn;  // pulls this->grad into parents

  int64_t size() const { return static_cast<int64_t>(value.size()); }
};

}  // namespace detail

// Scoped switch that disables graph recording; forward values are still
// computed. Used by purely forward-evaluating code (SPSA, accuracy sweeps).
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

// Immutable dense tensor of doubles, row-major, with an optional handle into
// the computation graph built per forward pass. Copies share the underlying
// node; all operations return fresh tensors.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  // Leaf node participating in gradient computation.
  static Tensor variable(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  int dim(int i) const;
  int64_t size() const;
  const std::vector<double>& data() const;
  double item() const;  // requires size() == 1

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // requires a completed backward()

  // Same values, detached from the graph (constant).
  Tensor detach() const;
  // Same values as a fresh leaf variable.
  Tensor as_variable() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// ---- elementwise, with numpy-style broadcasting for the binary ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // any zero in b -> error
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // any non-positive element -> error
Tensor sqrt(const Tensor& a);  // gradient guarded at 0
Tensor relu(const Tensor& a);  // gradient 0 at x <= 0
// Gradient passes on the closed interval [lo, hi], zero strictly outside.
Tensor clamp(const Tensor& a, double lo, double hi);
// Gradient defined as 0 everywhere; used post-gradient in attack steps.
Tensor sign(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor operator+(double s, const Tensor& a) { return add(Tensor::scalar(s), a); }
inline Tensor operator-(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor operator-(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator*(double s, const Tensor& a) { return mul(Tensor::scalar(s), a); }
inline Tensor operator/(const Tensor& a, double s) { return div(a, Tensor::scalar(s)); }

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // 2-D only
Tensor reshape(const Tensor& a, Shape shape);

// Direct convolution, NCHW input [n,c,h,w] against kernel [f,c,kh,kw].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

// ---- reductions / selection ----
Tensor sum(const Tensor& a);   // -> {1}
Tensor mean(const Tensor& a);  // -> {1}
Tensor row_sum(const Tensor& a);  // [m,n] -> [m,1]
Tensor row_max(const Tensor& a);  // [m,n] -> [m,1]; gradient to first argmax
// out[i] = a[i, idx[i]], shape {m}; gradient scatters back.
Tensor gather_cols(const Tensor& a, const std::vector<int>& idx);

// Numerically stable row softmax (max-subtraction). Rows sum to 1.
Tensor softmax(const Tensor& logits);

// ---- graph ----
// Reverse sweep from a scalar root; populates grad on every reachable
// variable (zeros where no path contributes). Deterministic.
void backward(const Tensor& root);

// ---- non-graph helpers ----
std::vector<int> argmax_rows(const Tensor& a);  // ties -> lowest index
Tensor onehot(const std::vector<int>& labels, int num_classes);
bool all_finite(const Tensor& a);
void check_finite(const Tensor& a, const std::string& what);
std::string shape_str(const Shape& s);

}  // namespace sipgd
