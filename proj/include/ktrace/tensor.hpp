// Dense 64-bit tensors with reverse-mode automatic differentiation on a
// dynamic tape. The tape is rebuilt per forward pass (define-by-run); a tape
// and the tensors it produced belong to one worker.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ktrace {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward reaches this tensor
  bool requires_grad = false;
};
}  // namespace detail

// Value-semantic handle to a tensor node. Copies share the underlying
// storage; tensors are immutable after creation except through
// values_mut()/grad_mut() (optimizer updates and gradient accumulation).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> values_mut() { return impl_->values; }

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Allocates (zero-filled) on first use.
  std::span<double> grad_mut();
  void zero_grad();

  double item() const;  // scalar tensors only
  double at(int r, int c) const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Records primitive operations in execution order (hence topologically
// sorted) and replays their local-gradient closures exactly once, in
// reverse, on backward().
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- elementwise (equal shapes, or one side scalar) ---
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double c);
  Tensor add_scalar(const Tensor& x, double c);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);  // domain error on non-positive input
  Tensor reciprocal(const Tensor& x);
  Tensor softplus(const Tensor& x);
  Tensor clamp(const Tensor& x, double lo, double hi);

  // --- linear algebra / structure ---
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& x);
  Tensor softmax(const Tensor& x, int axis);
  Tensor sum(const Tensor& x);  // -> scalar
  Tensor rows(const Tensor& table, const std::vector<int>& idx);
  Tensor gather_cols(const Tensor& m, const std::vector<int>& col_of_row);
  Tensor slice_cols(const Tensor& x, int begin, int count);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor concat_rows(const std::vector<Tensor>& pieces);
  Tensor tile_rows(const Tensor& row, int copies);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);

  // Inverted dropout: scales kept entries by 1/keep at train time so
  // inference needs no rescaling. Identity when !training or rate == 0.
  Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng,
                 bool training);

  // Populates grad for every requires_grad tensor reachable from loss.
  // loss must be scalar; calling twice without reset() is an error.
  void backward(const Tensor& loss);
  void reset();

  std::size_t node_count() const { return nodes_.size(); }
  bool recording() const { return recording_; }

 private:
  Tensor unary(const Tensor& x, const char* name,
               double (*f)(double), double (*df)(double, double));
  void record(bool needed, std::function<void()> fn);

  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
  bool backward_taken_ = false;
};

}  // namespace ktrace
