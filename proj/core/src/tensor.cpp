#include "sipgd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace sipgd {

using detail::TensorNode;

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<uint64_t> g_node_counter{1};

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
  return n;
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

void validate_shape(const Shape& s) {
  if (s.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(s));
  }
}

// Records parents/backfn on the result node when gradients are being traced.
void attach(const std::shared_ptr<TensorNode>& out,
            std::vector<std::shared_ptr<TensorNode>> parents,
            std::function<void(TensorNode&)> backfn) {
  if (!t_grad_enabled) return;
  bool any = false;
  for (const auto& p : parents) {
    if (p->needs_grad) { any = true; break; }
  }
  if (!any) return;
  out->needs_grad = true;
  out->parents = std::move(parents);
  out->backfn = std::move(backfn);
}

void accumulate(TensorNode& n, int64_t i, double v) {
  n.grad[static_cast<size_t>(i)] += v;
}

enum class BinKind { Add, Sub, Mul, Div };

// Effective strides of an operand shape aligned against the broadcast result
// shape; zero stride where the operand dimension is stretched.
std::vector<int64_t> bcast_strides(const Shape& s, const Shape& out) {
  int nd = static_cast<int>(out.size());
  int off = nd - static_cast<int>(s.size());
  std::vector<int64_t> natural(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    natural[i] = acc;
    acc *= s[i];
  }
  std::vector<int64_t> st(nd, 0);
  for (int i = 0; i < nd; ++i) {
    if (i < off) continue;          // implicit leading dim of size 1
    int sd = s[i - off];
    st[i] = (sd == 1 && out[i] > 1) ? 0 : natural[i - off];
  }
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  int nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (int i = 0; i < nd; ++i) {
    int ai = i < nd - static_cast<int>(a.size()) ? 1 : a[i - (nd - a.size())];
    int bi = i < nd - static_cast<int>(b.size()) ? 1 : b[i - (nd - b.size())];
    if (ai != bi && ai != 1 && bi != 1) {
      throw std::invalid_argument("shape mismatch: cannot broadcast " + shape_str(a) +
                                  " with " + shape_str(b));
    }
    out[i] = std::max(ai, bi);
  }
  return out;
}

// Walks the result index space applying fn(out_linear, a_offset, b_offset).
template <typename Fn>
void bcast_walk(const Shape& out, const std::vector<int64_t>& sa,
                const std::vector<int64_t>& sb, Fn&& fn) {
  int nd = static_cast<int>(out.size());
  int64_t total = shape_numel(out);
  std::vector<int> idx(nd, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t lin = 0; lin < total; ++lin) {
    fn(lin, ia, ib);
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      idx[d] = 0;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
    }
  }
}

double bin_fwd(BinKind k, double x, double y) {
  switch (k) {
    case BinKind::Add: return x + y;
    case BinKind::Sub: return x - y;
    case BinKind::Mul: return x * y;
    case BinKind::Div: return x / y;
  }
  return 0.0;
}

Tensor binary(const Tensor& a, const Tensor& b, BinKind kind) {
  if (!a.defined() || !b.defined()) throw std::invalid_argument("binary op on undefined tensor");
  const auto& av = a.data();
  const auto& bv = b.data();
  if (kind == BinKind::Div) {
    for (double y : bv) {
      if (y == 0.0) throw std::domain_error("div: zero denominator");
    }
  }

  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  std::vector<double> out(shape_numel(out_shape));

  bool same = a.shape() == b.shape();
  if (same) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = bin_fwd(kind, av[i], bv[i]);
  } else {
    auto sa = bcast_strides(a.shape(), out_shape);
    auto sb = bcast_strides(b.shape(), out_shape);
    bcast_walk(out_shape, sa, sb, [&](int64_t lin, int64_t ia, int64_t ib) {
      out[static_cast<size_t>(lin)] = bin_fwd(kind, av[ia], bv[ib]);
    });
  }

  auto node = make_node(out_shape, std::move(out));
  attach(node, {a.node(), b.node()}, [kind](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    auto contribute = [&](int64_t ia, int64_t ib, double gv) {
      double x = pa.value[static_cast<size_t>(ia)];
      double y = pb.value[static_cast<size_t>(ib)];
      switch (kind) {
        case BinKind::Add:
          if (pa.needs_grad) accumulate(pa, ia, gv);
          if (pb.needs_grad) accumulate(pb, ib, gv);
          break;
        case BinKind::Sub:
          if (pa.needs_grad) accumulate(pa, ia, gv);
          if (pb.needs_grad) accumulate(pb, ib, -gv);
          break;
        case BinKind::Mul:
          if (pa.needs_grad) accumulate(pa, ia, gv * y);
          if (pb.needs_grad) accumulate(pb, ib, gv * x);
          break;
        case BinKind::Div:
          if (pa.needs_grad) accumulate(pa, ia, gv / y);
          if (pb.needs_grad) accumulate(pb, ib, -gv * x / (y * y));
          break;
      }
    };
    if (pa.shape == self.shape && pb.shape == self.shape) {
      for (int64_t i = 0; i < self.size(); ++i) contribute(i, i, g[static_cast<size_t>(i)]);
    } else {
      auto sa = bcast_strides(pa.shape, self.shape);
      auto sb = bcast_strides(pb.shape, self.shape);
      bcast_walk(self.shape, sa, sb, [&](int64_t lin, int64_t ia, int64_t ib) {
        contribute(ia, ib, g[static_cast<size_t>(lin)]);
      });
    }
  });
  return Tensor(node);
}

// Unary op with per-element value and local-derivative weight computed from
// the input value.
template <typename FwdFn, typename DFn>
Tensor unary(const Tensor& a, FwdFn fwd, DFn dfdx) {
  if (!a.defined()) throw std::invalid_argument("unary op on undefined tensor");
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto node = make_node(a.shape(), std::move(out));
  attach(node, {a.node()}, [dfdx](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int64_t i = 0; i < self.size(); ++i) {
      size_t u = static_cast<size_t>(i);
      accumulate(p, i, self.grad[u] * dfdx(p.value[u], self.value[u]));
    }
  });
  return Tensor(node);
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  validate_shape(shape);
  std::vector<double> data(shape_numel(shape), v);
  return Tensor(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  return Tensor(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::variable(Shape shape, std::vector<double> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.node()->needs_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("shape() on undefined tensor");
  return node_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const { return shape().at(static_cast<size_t>(i)); }

int64_t Tensor::size() const { return node_ ? node_->size() : 0; }

const std::vector<double>& Tensor::data() const {
  if (!node_) throw std::logic_error("data() on undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() requires a scalar tensor, shape is " + shape_str(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->needs_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("grad() before backward(), or tensor not on a gradient path");
  return node_->grad;
}

Tensor Tensor::detach() const {
  if (!node_) return Tensor();
  return Tensor(make_node(node_->shape, node_->value));
}

Tensor Tensor::as_variable() const {
  if (!node_) throw std::logic_error("as_variable() on undefined tensor");
  return variable(node_->shape, node_->value);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::Div); }

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double fx) { return fx; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw std::domain_error("log: non-positive input");
  }
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.data()) {
    if (x < 0.0) throw std::domain_error("sqrt: negative input");
  }
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double fx) { return 0.5 / std::max(fx, 1e-12); });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sign(const Tensor& a) {
  // No backfn: the gradient is zero everywhere by definition.
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
  return Tensor(make_node(a.shape(), std::move(out)));
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw std::invalid_argument("matmul expects 2-D tensors, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      double aik = av[static_cast<size_t>(i) * k + kk];
      if (aik == 0.0) continue;
      const double* brow = &bv[static_cast<size_t>(kk) * n];
      double* orow = &out[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  auto node = make_node({m, n}, std::move(out));
  attach(node, {a.node(), b.node()}, [m, k, n](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.needs_grad) {  // ga = g . b^T
      for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
          double s = 0.0;
          const double* grow = &g[static_cast<size_t>(i) * n];
          const double* brow = &pb.value[static_cast<size_t>(kk) * n];
          for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
          accumulate(pa, static_cast<int64_t>(i) * k + kk, s);
        }
      }
    }
    if (pb.needs_grad) {  // gb = a^T . g
      for (int i = 0; i < m; ++i) {
        const double* grow = &g[static_cast<size_t>(i) * n];
        for (int kk = 0; kk < k; ++kk) {
          double aik = pa.value[static_cast<size_t>(i) * k + kk];
          if (aik == 0.0) continue;
          for (int j = 0; j < n; ++j) {
            accumulate(pb, static_cast<int64_t>(kk) * n + j, aik * grow[j]);
          }
        }
      }
    }
  });
  return Tensor(node);
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose expects a 2-D tensor");
  int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
  auto node = make_node({n, m}, std::move(out));
  attach(node, {a.node()}, [m, n](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        accumulate(p, static_cast<int64_t>(i) * n + j, self.grad[static_cast<size_t>(j) * m + i]);
  });
  return Tensor(node);
}

Tensor reshape(const Tensor& a, Shape shape) {
  validate_shape(shape);
  if (shape_numel(shape) != a.size()) {
    throw std::invalid_argument("reshape from " + shape_str(a.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  }
  auto node = make_node(std::move(shape), a.data());
  attach(node, {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int64_t i = 0; i < self.size(); ++i) accumulate(p, i, self.grad[static_cast<size_t>(i)]);
  });
  return Tensor(node);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  if (input.ndim() != 4 || kernel.ndim() != 4) {
    throw std::invalid_argument("conv2d expects 4-D input [n,c,h,w] and kernel [f,c,kh,kw]");
  }
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: stride must be >= 1, padding >= 0");
  int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  int F = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2), KW = kernel.dim(3);
  if (C != KC) throw std::invalid_argument("conv2d channel mismatch");
  if (H + 2 * padding < KH || W + 2 * padding < KW) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  int OH = (H + 2 * padding - KH) / stride + 1;
  int OW = (W + 2 * padding - KW) / stride + 1;

  const auto& in = input.data();
  const auto& ker = kernel.data();
  auto in_at = [&](int n, int c, int y, int x) {
    return in[((static_cast<size_t>(n) * C + c) * H + y) * W + x];
  };
  std::vector<double> out(static_cast<size_t>(N) * F * OH * OW, 0.0);
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double s = 0.0;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky) {
              int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < KW; ++kx) {
                int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= W) continue;
                s += in_at(n, c, iy, ix) * ker[((static_cast<size_t>(f) * C + c) * KH + ky) * KW + kx];
              }
            }
          out[((static_cast<size_t>(n) * F + f) * OH + oy) * OW + ox] = s;
        }

  auto node = make_node({N, F, OH, OW}, std::move(out));
  attach(node, {input.node(), kernel.node()},
         [N, C, H, W, F, KH, KW, OH, OW, stride, padding](TensorNode& self) {
           auto& pin = *self.parents[0];
           auto& pker = *self.parents[1];
           const auto& g = self.grad;
           for (int n = 0; n < N; ++n)
             for (int f = 0; f < F; ++f)
               for (int oy = 0; oy < OH; ++oy)
                 for (int ox = 0; ox < OW; ++ox) {
                   double gv = g[((static_cast<size_t>(n) * F + f) * OH + oy) * OW + ox];
                   if (gv == 0.0) continue;
                   for (int c = 0; c < C; ++c)
                     for (int ky = 0; ky < KH; ++ky) {
                       int iy = oy * stride - padding + ky;
                       if (iy < 0 || iy >= H) continue;
                       for (int kx = 0; kx < KW; ++kx) {
                         int ix = ox * stride - padding + kx;
                         if (ix < 0 || ix >= W) continue;
                         int64_t ii = ((static_cast<int64_t>(n) * C + c) * H + iy) * W + ix;
                         int64_t ki = ((static_cast<int64_t>(f) * C + c) * KH + ky) * KW + kx;
                         if (pin.needs_grad)
                           accumulate(pin, ii, gv * pker.value[static_cast<size_t>(ki)]);
                         if (pker.needs_grad)
                           accumulate(pker, ki, gv * pin.value[static_cast<size_t>(ii)]);
                       }
                     }
                 }
         });
  return Tensor(node);
}

// ---- reductions / selection ----

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto node = make_node({1}, {s});
  attach(node, {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    double g = self.grad[0];
    for (int64_t i = 0; i < p.size(); ++i) accumulate(p, i, g);
  });
  return Tensor(node);
}

Tensor mean(const Tensor& a) {
  int64_t n = a.size();
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto node = make_node({1}, {s / static_cast<double>(n)});
  attach(node, {a.node()}, [n](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    double g = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < p.size(); ++i) accumulate(p, i, g);
  });
  return Tensor(node);
}

Tensor row_sum(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("row_sum expects a 2-D tensor");
  int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += av[static_cast<size_t>(i) * n + j];
    out[static_cast<size_t>(i)] = s;
  }
  auto node = make_node({m, 1}, std::move(out));
  attach(node, {a.node()}, [m, n](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < m; ++i) {
      double g = self.grad[static_cast<size_t>(i)];
      for (int j = 0; j < n; ++j) accumulate(p, static_cast<int64_t>(i) * n + j, g);
    }
  });
  return Tensor(node);
}

Tensor row_max(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("row_max expects a 2-D tensor");
  int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(static_cast<size_t>(m));
  std::vector<int> arg(static_cast<size_t>(m), 0);
  for (int i = 0; i < m; ++i) {
    double best = av[static_cast<size_t>(i) * n];
    int bj = 0;
    for (int j = 1; j < n; ++j) {
      double v = av[static_cast<size_t>(i) * n + j];
      if (v > best) { best = v; bj = j; }
    }
    out[static_cast<size_t>(i)] = best;
    arg[static_cast<size_t>(i)] = bj;
  }
  auto node = make_node({m, 1}, std::move(out));
  attach(node, {a.node()}, [n, arg](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    int m2 = static_cast<int>(self.size());
    for (int i = 0; i < m2; ++i) {
      accumulate(p, static_cast<int64_t>(i) * n + arg[static_cast<size_t>(i)],
                 self.grad[static_cast<size_t>(i)]);
    }
  });
  return Tensor(node);
}

Tensor gather_cols(const Tensor& a, const std::vector<int>& idx) {
  if (a.ndim() != 2) throw std::invalid_argument("gather_cols expects a 2-D tensor");
  int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(idx.size()) != m) {
    throw std::invalid_argument("gather_cols: index count does not match row count");
  }
  for (int j : idx) {
    if (j < 0 || j >= n) throw std::out_of_range("gather_cols: index out of range [0," + std::to_string(n) + ")");
  }
  const auto& av = a.data();
  std::vector<double> out(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) out[static_cast<size_t>(i)] = av[static_cast<size_t>(i) * n + idx[static_cast<size_t>(i)]];
  auto node = make_node({m}, std::move(out));
  attach(node, {a.node()}, [n, idx](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    int m2 = static_cast<int>(self.size());
    for (int i = 0; i < m2; ++i) {
      accumulate(p, static_cast<int64_t>(i) * n + idx[static_cast<size_t>(i)],
                 self.grad[static_cast<size_t>(i)]);
    }
  });
  return Tensor(node);
}

Tensor softmax(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax expects a 2-D tensor [batch,classes]");
  int m = logits.dim(0), n = logits.dim(1);
  if (n < 2) throw std::invalid_argument("softmax requires at least 2 classes");
  const auto& lv = logits.data();
  std::vector<double> out(lv.size());
  for (int i = 0; i < m; ++i) {
    const double* row = &lv[static_cast<size_t>(i) * n];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    double* orow = &out[static_cast<size_t>(i) * n];
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= s;
  }
  auto node = make_node({m, n}, std::move(out));
  attach(node, {logits.node()}, [m, n](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < m; ++i) {
      const double* y = &self.value[static_cast<size_t>(i) * n];
      const double* g = &self.grad[static_cast<size_t>(i) * n];
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g[j] * y[j];
      for (int j = 0; j < n; ++j) {
        accumulate(p, static_cast<int64_t>(i) * n + j, y[j] * (g[j] - dot));
      }
    }
  });
  return Tensor(node);
}

// ---- graph ----

void backward(const Tensor& root) {
  if (!root.defined()) throw std::invalid_argument("backward on undefined tensor");
  if (root.size() != 1) {
    throw std::invalid_argument("backward requires a scalar root, shape is " + shape_str(root.shape()));
  }
  auto rn = root.node();
  if (!rn->needs_grad) {
    throw std::invalid_argument("backward: root does not depend on any variable");
  }

  // Collect the reachable subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{rn.get()};
  seen.insert(rn.get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->needs_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Parents always precede children in creation order, so descending id is a
  // topological order of the sweep.
  std::sort(order.begin(), order.end(),
            [](const TensorNode* x, const TensorNode* y) { return x->id > y->id; });

  for (TensorNode* n : order) n->grad.assign(n->value.size(), 0.0);
  rn->grad[0] = 1.0;
  for (TensorNode* n : order) {
    if (n->backfn) n->backfn(*n);
  }
}

// ---- non-graph helpers ----

std::vector<int> argmax_rows(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("argmax_rows expects a 2-D tensor");
  int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<int> out(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double best = av[static_cast<size_t>(i) * n];
    int bj = 0;
    for (int j = 1; j < n; ++j) {
      double v = av[static_cast<size_t>(i) * n + j];
      if (v > best) { best = v; bj = j; }
    }
    out[static_cast<size_t>(i)] = bj;
  }
  return out;
}

Tensor onehot(const std::vector<int>& labels, int num_classes) {
  int m = static_cast<int>(labels.size());
  if (m == 0) throw std::invalid_argument("onehot: empty label vector");
  std::vector<double> data(static_cast<size_t>(m) * num_classes, 0.0);
  for (int i = 0; i < m; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= num_classes) throw std::out_of_range("onehot: label out of range");
    data[static_cast<size_t>(i) * num_classes + y] = 1.0;
  }
  return Tensor::from({m, num_classes}, std::move(data));
}

bool all_finite(const Tensor& a) {
  for (double x : a.data()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_finite(const Tensor& a, const std::string& what) {
  if (!all_finite(a)) throw std::runtime_error("non-finite values in " + what);
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

}  // namespace sipgd
