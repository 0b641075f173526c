#include "ktrace/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ktrace {

namespace {

using detail::TensorImpl;
using Impl = std::shared_ptr<TensorImpl>;

void ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T   (dot-product form)
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (int d : shape)
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->values.assign(numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size())
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

std::span<double> Tensor::grad_mut() {
  ensure_grad(*impl_);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::at(int r, int c) const {
  return impl_->values[static_cast<std::size_t>(r) * dim(1) + c];
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

void Tape::record(bool needed, std::function<void()> fn) {
  if (recording_ && needed) nodes_.push_back(std::move(fn));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (backward_taken_) throw std::logic_error("backward called twice without reset");
  backward_taken_ = true;
  ensure_grad(*loss.impl());
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::reset() {
  nodes_.clear();
  backward_taken_ = false;
}

// --- elementwise -----------------------------------------------------------

namespace {

enum class Bcast { equal, a_scalar, b_scalar };

Bcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Bcast::equal;
  if (a.size() == 1) return Bcast::a_scalar;
  if (b.size() == 1) return Bcast::b_scalar;
  shape_error(op, a.shape(), b.shape());
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const Bcast kind = broadcast_kind("add", a, b);
  const Tensor& big = kind == Bcast::a_scalar ? b : a;
  Tensor out = Tensor::zeros(big.shape(), a.requires_grad() || b.requires_grad());
  auto av = a.values(), bv = b.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = av[kind == Bcast::a_scalar ? 0 : i] + bv[kind == Bcast::b_scalar ? 0 : i];
  record(out.requires_grad(), [ai = a.impl(), bi = b.impl(), oi = out.impl(), kind] {
    if (oi->grad.empty()) return;
    const auto& g = oi->grad;
    if (ai->requires_grad) {
      ensure_grad(*ai);
      if (kind == Bcast::a_scalar)
        for (double gi : g) ai->grad[0] += gi;
      else
        for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i];
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      if (kind == Bcast::b_scalar)
        for (double gi : g) bi->grad[0] += gi;
      else
        for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i];
    }
  });
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const Bcast kind = broadcast_kind("sub", a, b);
  const Tensor& big = kind == Bcast::a_scalar ? b : a;
  Tensor out = Tensor::zeros(big.shape(), a.requires_grad() || b.requires_grad());
  auto av = a.values(), bv = b.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = av[kind == Bcast::a_scalar ? 0 : i] - bv[kind == Bcast::b_scalar ? 0 : i];
  record(out.requires_grad(), [ai = a.impl(), bi = b.impl(), oi = out.impl(), kind] {
    if (oi->grad.empty()) return;
    const auto& g = oi->grad;
    if (ai->requires_grad) {
      ensure_grad(*ai);
      if (kind == Bcast::a_scalar)
        for (double gi : g) ai->grad[0] += gi;
      else
        for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i];
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      if (kind == Bcast::b_scalar)
        for (double gi : g) bi->grad[0] -= gi;
      else
        for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i] -= g[i];
    }
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const Bcast kind = broadcast_kind("mul", a, b);
  const Tensor& big = kind == Bcast::a_scalar ? b : a;
  Tensor out = Tensor::zeros(big.shape(), a.requires_grad() || b.requires_grad());
  auto av = a.values(), bv = b.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = av[kind == Bcast::a_scalar ? 0 : i] * bv[kind == Bcast::b_scalar ? 0 : i];
  record(out.requires_grad(), [ai = a.impl(), bi = b.impl(), oi = out.impl(), kind] {
    if (oi->grad.empty()) return;
    const auto& g = oi->grad;
    if (ai->requires_grad) {
      ensure_grad(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double bval = bi->values[kind == Bcast::b_scalar ? 0 : i];
        ai->grad[kind == Bcast::a_scalar ? 0 : i] += g[i] * bval;
      }
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double aval = ai->values[kind == Bcast::a_scalar ? 0 : i];
        bi->grad[kind == Bcast::b_scalar ? 0 : i] += g[i] * aval;
      }
    }
  });
  return out;
}

Tensor Tape::scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * c;
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl(), c] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i] * c;
  });
  return out;
}

Tensor Tape::add_scalar(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + c;
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl()] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
  });
  return out;
}

// Generic unary op: df receives (x, y) so it can reuse the forward value.
Tensor Tape::unary(const Tensor& x, const char*, double (*f)(double),
                   double (*df)(double, double)) {
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(xv[i]);
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl(), df] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < oi->grad.size(); ++i)
      xi->grad[i] += oi->grad[i] * df(xi->values[i], oi->values[i]);
  });
  return out;
}

Tensor Tape::tanh(const Tensor& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor Tape::sigmoid(const Tensor& x) {
  return unary(x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor Tape::relu(const Tensor& x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Tape::exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor Tape::log(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw std::domain_error("log of non-positive value " + std::to_string(v));
  return unary(x, "log", [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor Tape::reciprocal(const Tensor& x) {
  for (double v : x.values())
    if (v == 0.0) throw std::domain_error("reciprocal of zero");
  return unary(x, "reciprocal", [](double v) { return 1.0 / v; },
               [](double, double y) { return -y * y; });
}

Tensor Tape::softplus(const Tensor& x) {
  return unary(x, "softplus",
               [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
               [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor Tape::clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::min(hi, std::max(lo, xv[i]));
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl(), lo, hi] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < oi->grad.size(); ++i) {
      const double v = xi->values[i];
      if (v > lo && v < hi) xi->grad[i] += oi->grad[i];
    }
  });
  return out;
}

// --- structure / linear algebra --------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_error("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
  gemm_nn(a.values().data(), b.values().data(), out.values_mut().data(), m, k, n);
  record(out.requires_grad(), [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
    if (oi->grad.empty()) return;
    if (ai->requires_grad) {
      ensure_grad(*ai);
      gemm_nt(oi->grad.data(), bi->values.data(), ai->grad.data(), m, n, k);
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      gemm_tn(ai->values.data(), oi->grad.data(), bi->grad.data(), m, k, n);
    }
  });
  return out;
}

Tensor Tape::transpose(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose requires a 2-d tensor, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({n, m}, x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * n + j];
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl(), m, n] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        xi->grad[static_cast<std::size_t>(i) * n + j] +=
            oi->grad[static_cast<std::size_t>(j) * m + i];
  });
  return out;
}

Tensor Tape::softmax(const Tensor& x, int axis) {
  if (x.rank() != 1 && x.rank() != 2)
    throw std::invalid_argument("softmax supports 1-d/2-d tensors, got " + shape_str(x.shape()));
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("softmax: bad axis");
  const bool rowwise = (x.rank() == 1) || axis == 1;
  const int nslices = x.rank() == 1 ? 1 : (rowwise ? x.dim(0) : x.dim(1));
  const int slice_len = x.rank() == 1 ? x.dim(0) : (rowwise ? x.dim(1) : x.dim(0));
  const int stride = rowwise ? 1 : x.dim(1);
  const int slice_stride = rowwise ? slice_len : 1;

  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (int s = 0; s < nslices; ++s) {
    const std::size_t base = static_cast<std::size_t>(s) * slice_stride;
    double mx = xv[base];
    for (int i = 1; i < slice_len; ++i)
      mx = std::max(mx, xv[base + static_cast<std::size_t>(i) * stride]);
    double total = 0.0;
    for (int i = 0; i < slice_len; ++i) {
      const std::size_t p = base + static_cast<std::size_t>(i) * stride;
      ov[p] = std::exp(xv[p] - mx);
      total += ov[p];
    }
    for (int i = 0; i < slice_len; ++i) ov[base + static_cast<std::size_t>(i) * stride] /= total;
  }
  record(out.requires_grad(),
         [xi = x.impl(), oi = out.impl(), nslices, slice_len, stride, slice_stride] {
           if (oi->grad.empty()) return;
           ensure_grad(*xi);
           for (int s = 0; s < nslices; ++s) {
             const std::size_t base = static_cast<std::size_t>(s) * slice_stride;
             double dot = 0.0;
             for (int i = 0; i < slice_len; ++i) {
               const std::size_t p = base + static_cast<std::size_t>(i) * stride;
               dot += oi->grad[p] * oi->values[p];
             }
             for (int i = 0; i < slice_len; ++i) {
               const std::size_t p = base + static_cast<std::size_t>(i) * stride;
               xi->grad[p] += oi->values[p] * (oi->grad[p] - dot);
             }
           }
         });
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  Tensor out = Tensor::zeros({1}, x.requires_grad());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values_mut()[0] = acc;
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl()] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    const double g = oi->grad[0];
    for (double& gi : xi->grad) gi += g;
  });
  return out;
}

Tensor Tape::rows(const Tensor& table, const std::vector<int>& idx) {
  if (table.rank() != 2) throw std::invalid_argument("rows requires a 2-d table");
  const int nrows = table.dim(0), ncols = table.dim(1);
  for (int r : idx)
    if (r < 0 || r >= nrows)
      throw std::out_of_range("row index " + std::to_string(r) + " outside table " +
                              shape_str(table.shape()));
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), ncols}, table.requires_grad());
  auto tv = table.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * ncols, ncols,
                ov.data() + i * ncols);
  record(out.requires_grad(), [ti = table.impl(), oi = out.impl(), idx, ncols] {
    if (oi->grad.empty()) return;
    ensure_grad(*ti);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* dst = ti->grad.data() + static_cast<std::size_t>(idx[i]) * ncols;
      const double* src = oi->grad.data() + i * ncols;
      for (int j = 0; j < ncols; ++j) dst[j] += src[j];
    }
  });
  return out;
}

Tensor Tape::gather_cols(const Tensor& m, const std::vector<int>& col_of_row) {
  if (m.rank() != 2) throw std::invalid_argument("gather_cols requires a 2-d tensor");
  const int nrows = m.dim(0), ncols = m.dim(1);
  if (static_cast<int>(col_of_row.size()) != nrows)
    throw std::invalid_argument("gather_cols: need one column index per row");
  for (int c : col_of_row)
    if (c < 0 || c >= ncols) throw std::out_of_range("column index " + std::to_string(c) + " outside " + shape_str(m.shape()));
  Tensor out = Tensor::zeros({nrows}, m.requires_grad());
  auto mv = m.values();
  auto ov = out.values_mut();
  for (int i = 0; i < nrows; ++i)
    ov[i] = mv[static_cast<std::size_t>(i) * ncols + col_of_row[i]];
  record(out.requires_grad(), [mi = m.impl(), oi = out.impl(), col_of_row, ncols] {
    if (oi->grad.empty()) return;
    ensure_grad(*mi);
    for (std::size_t i = 0; i < col_of_row.size(); ++i)
      mi->grad[i * ncols + col_of_row[i]] += oi->grad[i];
  });
  return out;
}

Tensor Tape::slice_cols(const Tensor& x, int begin, int count) {
  if (x.rank() != 2) throw std::invalid_argument("slice_cols requires a 2-d tensor");
  const int nrows = x.dim(0), ncols = x.dim(1);
  if (begin < 0 || count <= 0 || begin + count > ncols)
    throw std::out_of_range("slice_cols [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({nrows, count}, x.requires_grad());
  auto xv = x.values();
  auto ov = out.values_mut();
  for (int i = 0; i < nrows; ++i)
    std::copy_n(xv.data() + static_cast<std::size_t>(i) * ncols + begin, count,
                ov.data() + static_cast<std::size_t>(i) * count);
  record(out.requires_grad(), [xi = x.impl(), oi = out.impl(), begin, count, ncols] {
    if (oi->grad.empty()) return;
    ensure_grad(*xi);
    const int nrows = static_cast<int>(oi->values.size()) / count;
    for (int i = 0; i < nrows; ++i) {
      double* dst = xi->grad.data() + static_cast<std::size_t>(i) * ncols + begin;
      const double* src = oi->grad.data() + static_cast<std::size_t>(i) * count;
      for (int j = 0; j < count; ++j) dst[j] += src[j];
    }
  });
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    shape_error("concat_cols", a.shape(), b.shape());
  const int nrows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out = Tensor::zeros({nrows, ca + cb}, a.requires_grad() || b.requires_grad());
  auto av = a.values(), bv = b.values();
  auto ov = out.values_mut();
  for (int i = 0; i < nrows; ++i) {
    std::copy_n(av.data() + static_cast<std::size_t>(i) * ca, ca,
                ov.data() + static_cast<std::size_t>(i) * (ca + cb));
    std::copy_n(bv.data() + static_cast<std::size_t>(i) * cb, cb,
                ov.data() + static_cast<std::size_t>(i) * (ca + cb) + ca);
  }
  record(out.requires_grad(), [ai = a.impl(), bi = b.impl(), oi = out.impl(), nrows, ca, cb] {
    if (oi->grad.empty()) return;
    for (int i = 0; i < nrows; ++i) {
      const double* src = oi->grad.data() + static_cast<std::size_t>(i) * (ca + cb);
      if (ai->requires_grad) {
        ensure_grad(*ai);
        double* dst = ai->grad.data() + static_cast<std::size_t>(i) * ca;
        for (int j = 0; j < ca; ++j) dst[j] += src[j];
      }
      if (bi->requires_grad) {
        ensure_grad(*bi);
        double* dst = bi->grad.data() + static_cast<std::size_t>(i) * cb;
        for (int j = 0; j < cb; ++j) dst[j] += src[ca + j];
      }
    }
  });
  return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& pieces) {
  if (pieces.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
  const int cols = pieces[0].rank() == 2 ? pieces[0].dim(1) : 1;
  int nrows = 0;
  bool needs_grad = false;
  for (const auto& p : pieces) {
    if (p.rank() != 2 || p.dim(1) != cols)
      shape_error("concat_rows", pieces[0].shape(), p.shape());
    nrows += p.dim(0);
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor out = Tensor::zeros({nrows, cols}, needs_grad);
  auto ov = out.values_mut();
  std::size_t at = 0;
  for (const auto& p : pieces) {
    auto pv = p.values();
    std::copy(pv.begin(), pv.end(), ov.data() + at);
    at += pv.size();
  }
  std::vector<Impl> impls;
  impls.reserve(pieces.size());
  for (const auto& p : pieces) impls.push_back(p.impl());
  record(needs_grad, [impls = std::move(impls), oi = out.impl()] {
    if (oi->grad.empty()) return;
    std::size_t at = 0;
    for (const auto& pi : impls) {
      const auto n = pi->values.size();
      if (pi->requires_grad) {
        ensure_grad(*pi);
        for (std::size_t j = 0; j < n; ++j) pi->grad[j] += oi->grad[at + j];
      }
      at += n;
    }
  });
  return out;
}

Tensor Tape::tile_rows(const Tensor& row, int copies) {
  if (row.rank() != 2 || row.dim(0) != 1)
    throw std::invalid_argument("tile_rows requires a [1xN] tensor, got " + shape_str(row.shape()));
  if (copies <= 0) throw std::invalid_argument("tile_rows: copies must be positive");
  const int n = row.dim(1);
  Tensor out = Tensor::zeros({copies, n}, row.requires_grad());
  auto rv = row.values();
  auto ov = out.values_mut();
  for (int i = 0; i < copies; ++i)
    std::copy_n(rv.data(), n, ov.data() + static_cast<std::size_t>(i) * n);
  record(out.requires_grad(), [ri = row.impl(), oi = out.impl(), copies, n] {
    if (oi->grad.empty()) return;
    ensure_grad(*ri);
    for (int i = 0; i < copies; ++i) {
      const double* src = oi->grad.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ri->grad[j] += src[j];
    }
  });
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2) throw std::invalid_argument("layer_norm requires a 2-d tensor");
  const int m = x.dim(0), n = x.dim(1);
  if (gain.rank() != 2 || gain.dim(0) != 1 || gain.dim(1) != n) shape_error("layer_norm gain", x.shape(), gain.shape());
  if (bias.rank() != 2 || bias.dim(0) != 1 || bias.dim(1) != n) shape_error("layer_norm bias", x.shape(), bias.shape());

  Tensor out = Tensor::zeros({m, n}, x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  auto ov = out.values_mut();
  std::vector<double> inv_sd(static_cast<std::size_t>(m));
  std::vector<double> xhat(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* xi = xv.data() + static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xi[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= n;
    const double isd = 1.0 / std::sqrt(var + eps);
    inv_sd[static_cast<std::size_t>(i)] = isd;
    for (int j = 0; j < n; ++j) {
      const double h = (xi[j] - mean) * isd;
      xhat[static_cast<std::size_t>(i) * n + j] = h;
      ov[static_cast<std::size_t>(i) * n + j] = h * gv[j] + bv[j];
    }
  }
  record(out.requires_grad(), [xi_ = x.impl(), gi_ = gain.impl(), bi_ = bias.impl(),
                               oi = out.impl(), m, n, inv_sd = std::move(inv_sd),
                               xhat = std::move(xhat)] {
    if (oi->grad.empty()) return;
    for (int i = 0; i < m; ++i) {
      const double* dy = oi->grad.data() + static_cast<std::size_t>(i) * n;
      const double* xh = xhat.data() + static_cast<std::size_t>(i) * n;
      if (gi_->requires_grad) {
        ensure_grad(*gi_);
        for (int j = 0; j < n; ++j) gi_->grad[j] += dy[j] * xh[j];
      }
      if (bi_->requires_grad) {
        ensure_grad(*bi_);
        for (int j = 0; j < n; ++j) bi_->grad[j] += dy[j];
      }
      if (xi_->requires_grad) {
        ensure_grad(*xi_);
        double sum_gdy = 0.0, sum_gdy_xh = 0.0;
        for (int j = 0; j < n; ++j) {
          const double gdy = dy[j] * gi_->values[j];
          sum_gdy += gdy;
          sum_gdy_xh += gdy * xh[j];
        }
        const double isd = inv_sd[static_cast<std::size_t>(i)];
        double* dx = xi_->grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
          const double gdy = dy[j] * gi_->values[j];
          dx[j] += isd * (gdy - sum_gdy / n - xh[j] * sum_gdy_xh / n);
        }
      }
    }
  });
  return out;
}

Tensor Tape::dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  Tensor mask = Tensor::zeros(x.shape());
  auto mv = mask.values_mut();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& v : mv) v = unit(rng) < keep ? 1.0 / keep : 0.0;
  return mul(x, mask);
}

}  // namespace ktrace
