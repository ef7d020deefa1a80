#include "inconvad/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "inconvad/kernels.hpp"

namespace inconvad::ag {

// ---------------------------------------------------------------- GradStore

Matrix& GradStore::at(const Parameter* p) {
  auto it = grads_.find(p);
  if (it == grads_.end()) {
    it = grads_.emplace(p, Matrix(p->value.rows(), p->value.cols())).first;
  }
  return it->second;
}

const Matrix* GradStore::find(const Parameter* p) const {
  auto it = grads_.find(p);
  return it == grads_.end() ? nullptr : &it->second;
}

void GradStore::accumulate(const GradStore& other, const ParamList& params) {
  for (const Parameter* p : params) {
    const Matrix* g = other.find(p);
    if (!g) continue;
    kernels::axpy(1.0, g->flat(), at(p).flat());
  }
}

// -------------------------------------------------------------------- Graph

const Matrix& Var::value() const { return graph_->value_of(id_); }

const Matrix& Graph::value_of(std::uint32_t id) const {
  const Node& n = *nodes_[id];
  return n.external ? *n.external : n.value;
}

Matrix& Graph::grad_buffer(std::uint32_t id) {
  Node& n = *nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value_of(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

Var Graph::push(Matrix value, bool requires_grad, BackwardFn fn) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) node->backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Matrix m) { return push(std::move(m), false, nullptr); }

Var Graph::input(Matrix m) { return push(std::move(m), true, nullptr); }

Var Graph::param(const Parameter& p) {
  auto node = std::make_unique<Node>();
  node->external = &p.value;
  node->requires_grad = true;
  node->param = &p;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Graph::backward(Var out, GradStore& grads) {
  if (out.graph() != this) throw std::invalid_argument("backward: variable from another graph");
  if (out.value().size() != 1) throw std::invalid_argument("backward: output must be 1x1");
  for (auto& n : nodes_) n->grad = Matrix();
  if (!nodes_[out.id()]->requires_grad) return;
  grad_buffer(out.id())[0] = 1.0;
  for (std::int64_t id = out.id(); id >= 0; --id) {
    Node& n = *nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, static_cast<std::uint32_t>(id));
    if (n.param) kernels::axpy(1.0, n.grad.flat(), grads.at(n.param).flat());
  }
}

void Graph::backward(Var out) {
  GradStore sink;
  backward(out, sink);
}

Matrix Graph::grad(Var v) const {
  const Node& n = *nodes_[v.id()];
  if (n.grad.empty()) return Matrix(v.rows(), v.cols());
  return n.grad;
}

// ---------------------------------------------------------------- helpers

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty variable");
  return *a.graph();
}

bool any_grad(Graph& g, std::initializer_list<Var> vars) {
  for (Var v : vars)
    if (g.requires_grad(v.id())) return true;
  return false;
}

// Elementwise unary op; `deriv(x, y)` is dy/dx.
template <class F, class D>
Var unary(Var a, F f, D deriv) {
  Graph& g = graph_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto ia = a.id();
  return g.push(std::move(y), g.requires_grad(ia), [ia, deriv](Graph& gr, std::uint32_t self) {
    const Matrix& xv = gr.value_of(ia);
    const Matrix& yv = gr.value_of(self);
    const Matrix& dy = gr.grad_of(self);
    Matrix& dx = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * deriv(xv[i], yv[i]);
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ------------------------------------------------------------ elementwise

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Matrix y = a.value();
  kernels::axpy(1.0, b.value().flat(), y.flat());
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    if (gr.requires_grad(ia)) kernels::axpy(1.0, dy.flat(), gr.grad_buffer(ia).flat());
    if (gr.requires_grad(ib)) kernels::axpy(1.0, dy.flat(), gr.grad_buffer(ib).flat());
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  Matrix y = a.value();
  kernels::axpy(-1.0, b.value().flat(), y.flat());
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    if (gr.requires_grad(ia)) kernels::axpy(1.0, dy.flat(), gr.grad_buffer(ia).flat());
    if (gr.requires_grad(ib)) kernels::axpy(-1.0, dy.flat(), gr.grad_buffer(ib).flat());
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& x1 = gr.value_of(ia);
    const Matrix& x2 = gr.value_of(ib);
    if (gr.requires_grad(ia)) {
      Matrix& d = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * x2[i];
    }
    if (gr.requires_grad(ib)) {
      Matrix& d = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * x1[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_row(Var a, Var b) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r) kernels::axpy(1.0, bv.row(0), y.row(r));
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    if (gr.requires_grad(ia)) kernels::axpy(1.0, dy.flat(), gr.grad_buffer(ia).flat());
    if (gr.requires_grad(ib)) {
      Matrix& db = gr.grad_buffer(ib);
      for (std::size_t r = 0; r < dy.rows(); ++r) kernels::axpy(1.0, dy.row(r), db.row(0));
    }
  });
}

Var mul_row(Var a, Var b) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) *= bv(0, c);
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& x = gr.value_of(ia);
    const Matrix& s = gr.value_of(ib);
    if (gr.requires_grad(ia)) {
      Matrix& d = gr.grad_buffer(ia);
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += dy(r, c) * s(0, c);
    }
    if (gr.requires_grad(ib)) {
      Matrix& d = gr.grad_buffer(ib);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) d(0, c) += dy(r, c) * x(r, c);
    }
  });
}

Var mul_col(Var a, Var b) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != av.rows()) throw std::invalid_argument("mul_col: shape mismatch");
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (double& v : y.row(r)) v *= bv(r, 0);
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& x = gr.value_of(ia);
    const Matrix& s = gr.value_of(ib);
    if (gr.requires_grad(ia)) {
      Matrix& d = gr.grad_buffer(ia);
      for (std::size_t r = 0; r < d.rows(); ++r) kernels::axpy(s(r, 0), dy.row(r), d.row(r));
    }
    if (gr.requires_grad(ib)) {
      Matrix& d = gr.grad_buffer(ib);
      for (std::size_t r = 0; r < dy.rows(); ++r) d(r, 0) += kernels::dot(dy.row(r), x.row(r));
    }
  });
}

Var mul_const(Var a, const Matrix& c) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), c, "mul_const");
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
  const auto ia = a.id();
  return g.push(std::move(y), g.requires_grad(ia), [ia, c](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * c[i];
  });
}

Var add_const(Var a, const Matrix& c) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), c, "add_const");
  Matrix y = a.value();
  kernels::axpy(1.0, c.flat(), y.flat());
  const auto ia = a.id();
  return g.push(std::move(y), g.requires_grad(ia), [ia](Graph& gr, std::uint32_t self) {
    kernels::axpy(1.0, gr.grad_of(self).flat(), gr.grad_buffer(ia).flat());
  });
}

// ---------------------------------------------------------------- matmul

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Matrix y(m, n);
  kernels::gemm(m, n, k, av.raw(), k, 1, bv.raw(), n, y.raw(), n);
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib, m, n, k](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& x1 = gr.value_of(ia);
    const Matrix& x2 = gr.value_of(ib);
    // dA += dY B^T
    if (gr.requires_grad(ia)) kernels::gemm_nt(m, k, n, dy.raw(), n, x2.raw(), n, gr.grad_buffer(ia).raw(), k);
    // dB += A^T dY
    if (gr.requires_grad(ib)) kernels::gemm(k, n, m, x1.raw(), 1, k, dy.raw(), n, gr.grad_buffer(ib).raw(), n);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Matrix y(m, n);
  kernels::gemm_nt(m, n, k, av.raw(), k, bv.raw(), k, y.raw(), n);
  const auto ia = a.id(), ib = b.id();
  return g.push(std::move(y), any_grad(g, {a, b}), [ia, ib, m, n, k](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& x1 = gr.value_of(ia);
    const Matrix& x2 = gr.value_of(ib);
    // dA += dY B
    if (gr.requires_grad(ia)) kernels::gemm(m, k, n, dy.raw(), n, 1, x2.raw(), k, gr.grad_buffer(ia).raw(), k);
    // dB += dY^T A
    if (gr.requires_grad(ib)) kernels::gemm(n, k, m, dy.raw(), 1, n, x1.raw(), k, gr.grad_buffer(ib).raw(), k);
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  Matrix y(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) y(c, r) = av(r, c);
  const auto ia = a.id();
  return g.push(std::move(y), g.requires_grad(ia), [ia](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(ia);
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += dy(c, r);
  });
}

// ------------------------------------------------------------- structural

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  if (start + count > av.cols()) throw std::invalid_argument("slice_cols: out of range");
  Matrix y(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    std::copy_n(av.row(r).begin() + static_cast<std::ptrdiff_t>(start), count, y.row(r).begin());
  const auto ia = a.id();
  return g.push(std::move(y), g.requires_grad(ia), [ia, start, count](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(ia);
    for (std::size_t r = 0; r < dy.rows(); ++r)
      kernels::axpy(1.0, dy.row(r), d.row(r).subspan(start, count));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Graph& g = graph_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool needs = false;
  std::vector<std::uint32_t> ids;
  for (Var p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || g.requires_grad(p.id());
    ids.push_back(p.id());
  }
  Matrix y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.cols();
  }
  return g.push(std::move(y), needs, [ids](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t c = gr.value_of(id).cols();
      if (gr.requires_grad(id)) {
        Matrix& d = gr.grad_buffer(id);
        for (std::size_t r = 0; r < dy.rows(); ++r) kernels::axpy(1.0, dy.row(r).subspan(off, c), d.row(r));
      }
      off += c;
    }
  });
}

Var sum_all(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.value().flat()) s += v;
  const auto ia = a.id();
  return g.push(Matrix(1, 1, s), g.requires_grad(ia), [ia](Graph& gr, std::uint32_t self) {
    const double dy = gr.grad_of(self)[0];
    for (double& d : gr.grad_buffer(ia).flat()) d += dy;
  });
}

Var sum_rows(Var a) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  Matrix y(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) kernels::axpy(1.0, av.row(r), y.row(0));
  const auto ia = a.id();
  return g.push(std::move(y), g.requires_grad(ia), [ia](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(ia);
    for (std::size_t r = 0; r < d.rows(); ++r) kernels::axpy(1.0, dy.row(0), d.row(r));
  });
}

// ------------------------------------------------------------ nonlinear

Var gelu(Var a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

namespace {
inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var swish(Var a) {
  return unary(
      a, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp_min(Var a, double lo) {
  return unary(
      a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var glu(Var a) {
  const std::size_t c = a.cols();
  if (c % 2 != 0) throw std::invalid_argument("glu: odd width");
  return mul(slice_cols(a, 0, c / 2), sigmoid(slice_cols(a, c / 2, c / 2)));
}

// ------------------------------------------------------------- sequences

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x);
  const Matrix& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gain.cols() != cols || bias.cols() != cols) throw std::invalid_argument("layer_norm: width mismatch");
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  Matrix y(rows, cols);
  // Normalized activations and inverse std are kept for backward.
  auto xhat = std::make_shared<Matrix>(rows, cols);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (row[c] - mean) * is;
      (*xhat)(r, c) = h;
      y(r, c) = gv(0, c) * h + bv(0, c);
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return g.push(std::move(y), any_grad(g, {x, gain, bias}), [ix, ig, ib, xhat, inv_std](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& gv2 = gr.value_of(ig);
    const std::size_t rows2 = dy.rows(), cols2 = dy.cols();
    if (gr.requires_grad(ig)) {
      Matrix& d = gr.grad_buffer(ig);
      for (std::size_t r = 0; r < rows2; ++r)
        for (std::size_t c = 0; c < cols2; ++c) d(0, c) += dy(r, c) * (*xhat)(r, c);
    }
    if (gr.requires_grad(ib)) {
      Matrix& d = gr.grad_buffer(ib);
      for (std::size_t r = 0; r < rows2; ++r) kernels::axpy(1.0, dy.row(r), d.row(0));
    }
    if (gr.requires_grad(ix)) {
      Matrix& d = gr.grad_buffer(ix);
      std::vector<double> dh(cols2);
      for (std::size_t r = 0; r < rows2; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t c = 0; c < cols2; ++c) {
          dh[c] = dy(r, c) * gv2(0, c);
          mean_dh += dh[c];
          mean_dh_h += dh[c] * (*xhat)(r, c);
        }
        mean_dh /= static_cast<double>(cols2);
        mean_dh_h /= static_cast<double>(cols2);
        const double is = (*inv_std)[r];
        for (std::size_t c = 0; c < cols2; ++c) d(r, c) += is * (dh[c] - mean_dh - (*xhat)(r, c) * mean_dh_h);
      }
    }
  });
}

Var masked_softmax_rows(Var scores, const std::vector<bool>& col_mask) {
  Graph& g = graph_of(scores);
  const Matrix& s = scores.value();
  if (col_mask.size() != s.cols()) throw std::invalid_argument("masked_softmax_rows: mask length mismatch");
  bool any = false;
  for (bool m : col_mask) any = any || m;
  if (!any) throw std::invalid_argument("masked_softmax_rows: every column is masked");
  Matrix p(s.rows(), s.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.cols(); ++c)
      if (col_mask[c]) mx = std::max(mx, s(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      const double e = col_mask[c] ? std::exp(s(r, c) - mx) : 0.0;
      p(r, c) = e;
      z += e;
    }
    for (double& v : p.row(r)) v /= z;
  }
  const auto is = scores.id();
  return g.push(std::move(p), g.requires_grad(is), [is](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& pv = gr.value_of(self);
    Matrix& d = gr.grad_buffer(is);
    for (std::size_t r = 0; r < pv.rows(); ++r) {
      const double inner = kernels::dot(pv.row(r), dy.row(r));
      for (std::size_t c = 0; c < pv.cols(); ++c) d(r, c) += pv(r, c) * (dy(r, c) - inner);
    }
  });
}

Var mask_rows(Var x, const std::vector<bool>& row_mask) {
  if (row_mask.size() != x.rows()) throw std::invalid_argument("mask_rows: mask length mismatch");
  bool all = true;
  for (bool m : row_mask) all = all && m;
  if (all) return x;
  Matrix c(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    if (row_mask[r]) std::fill(c.row(r).begin(), c.row(r).end(), 1.0);
  // Overwrite rather than multiply so non-finite masked content cannot leak.
  Graph& g = graph_of(x);
  Matrix y(x.rows(), x.cols());
  const Matrix& xv = x.value();
  for (std::size_t r = 0; r < x.rows(); ++r)
    if (row_mask[r]) std::copy(xv.row(r).begin(), xv.row(r).end(), y.row(r).begin());
  const auto ix = x.id();
  return g.push(std::move(y), g.requires_grad(ix), [ix, c](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * c[i];
  });
}

Var masked_mean_rows(Var x, const std::vector<bool>& row_mask) {
  if (row_mask.size() != x.rows()) throw std::invalid_argument("masked_mean_rows: mask length mismatch");
  std::size_t n = 0;
  for (bool m : row_mask) n += m ? 1 : 0;
  if (n == 0) throw std::invalid_argument("masked_mean_rows: no valid rows");
  Graph& g = graph_of(x);
  const Matrix& xv = x.value();
  Matrix y(1, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    if (row_mask[r]) kernels::axpy(1.0, xv.row(r), y.row(0));
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : y.flat()) v *= inv;
  const auto ix = x.id();
  return g.push(std::move(y), g.requires_grad(ix), [ix, row_mask, inv](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(ix);
    for (std::size_t r = 0; r < d.rows(); ++r)
      if (row_mask[r]) kernels::axpy(inv, dy.row(0), d.row(r));
  });
}

Var depthwise_conv1d(Var x, Var weight, Var bias) {
  Graph& g = graph_of(x);
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  const Matrix& bv = bias.value();
  const std::size_t T = xv.rows(), C = xv.cols(), K = wv.rows();
  if (wv.cols() != C || bv.cols() != C || K % 2 == 0)
    throw std::invalid_argument("depthwise_conv1d: bad kernel shape");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(K / 2);
  Matrix y(T, C);
  for (std::size_t t = 0; t < T; ++t) {
    auto yr = y.row(t);
    std::copy(bv.row(0).begin(), bv.row(0).end(), yr.begin());
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      auto xr = xv.row(static_cast<std::size_t>(src));
      auto wr = wv.row(k);
      for (std::size_t c = 0; c < C; ++c) yr[c] += wr[c] * xr[c];
    }
  }
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return g.push(std::move(y), any_grad(g, {x, weight, bias}), [ix, iw, ib, half](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    const Matrix& x2 = gr.value_of(ix);
    const Matrix& w2 = gr.value_of(iw);
    const std::size_t T2 = x2.rows(), C2 = x2.cols(), K2 = w2.rows();
    const bool gx = gr.requires_grad(ix), gw = gr.requires_grad(iw);
    Matrix* dx = gx ? &gr.grad_buffer(ix) : nullptr;
    Matrix* dw = gw ? &gr.grad_buffer(iw) : nullptr;
    for (std::size_t t = 0; t < T2; ++t) {
      auto dyr = dy.row(t);
      for (std::size_t k = 0; k < K2; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T2)) continue;
        const auto s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < C2; ++c) {
          if (dx) (*dx)(s, c) += w2(k, c) * dyr[c];
          if (dw) (*dw)(k, c) += x2(s, c) * dyr[c];
        }
      }
    }
    if (gr.requires_grad(ib)) {
      Matrix& db = gr.grad_buffer(ib);
      for (std::size_t t = 0; t < T2; ++t) kernels::axpy(1.0, dy.row(t), db.row(0));
    }
  });
}

Var embedding(Var table, const std::vector<std::size_t>& ids) {
  Graph& g = graph_of(table);
  const Matrix& tv = table.value();
  Matrix y(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) throw std::out_of_range("embedding: id out of range");
    std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), y.row(i).begin());
  }
  const auto it = table.id();
  return g.push(std::move(y), g.requires_grad(it), [it, ids](Graph& gr, std::uint32_t self) {
    const Matrix& dy = gr.grad_of(self);
    Matrix& d = gr.grad_buffer(it);
    for (std::size_t i = 0; i < ids.size(); ++i) kernels::axpy(1.0, dy.row(i), d.row(ids[i]));
  });
}

Var dropout(Var x, double rate) {
  Graph& g = graph_of(x);
  if (!g.training() || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  Matrix keep(x.rows(), x.cols());
  const double inv = 1.0 / (1.0 - rate);
  auto& rng = g.rng();
  for (double& k : keep.flat()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    k = u >= rate ? inv : 0.0;
  }
  return mul_const(x, keep);
}

}  // namespace inconvad::ag
