#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stp {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Thrown when operand extents do not agree with an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a forward op would produce NaN or Inf, or a loss diverges.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the gradient tape (foreign loss, non-scalar loss, ...).
class GradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  // Computed only from trainable leaves (excluded from activation accounting).
  bool param_derived = false;
  // Set when the tensor was produced by a recorded op.
  std::uint64_t tape_id = 0;
  std::int64_t node = -1;
};

/// Dense row-major N-d array with an optional gradient slot. Copies share storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  /// Extent of `axis`; negative axes count from the back.
  Index dim(int axis) const;
  Index numel() const { return static_cast<Index>(impl_->data.size()); }

  std::span<const T> data() const { return impl_->data; }
  /// Writable view. Only meaningful for leaves (parameters, inputs).
  std::span<T> mutable_data() { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }
  T item() const;
  T operator[](Index i) const { return impl_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Fresh leaf with a copy of the data and no gradient history.
  Tensor detach() const;
  /// Deep copy that keeps requires_grad.
  Tensor clone() const;

  TensorImpl<T>* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Backward closure: receives the output gradient, accumulates into inputs.
template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out)>;

/// Ordered record of differentiable ops. Creation order is a topological order.
template <typename T>
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }
  /// Bytes held by recorded, data-dependent, non-scalar op outputs.
  std::size_t activation_bytes() const { return activation_bytes_; }
  void clear();

  void record(const Tensor<T>& out, std::string_view op, bool activation, BackwardFn<T> fn);

  /// Reverse sweep from a scalar loss produced on this tape.
  void backward(const Tensor<T>& loss);

 private:
  struct Node {
    std::shared_ptr<TensorImpl<T>> out;
    std::string_view op;
    BackwardFn<T> fn;
  };
  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::size_t activation_bytes_ = 0;
};

template <typename T>
void backward(Tape<T>& tape, const Tensor<T>& loss) {
  tape.backward(loss);
}

/// Tape that ops on this thread record onto, or nullptr (no recording).
template <typename T>
Tape<T>* active_tape();

/// RAII: makes `tape` the active tape for the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// RAII: suspends recording on the current thread.
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Gradient slot of `t`, zero-allocated on first use; empty span when `t` takes no gradient.
template <typename T>
std::span<T> grad_slot(const Tensor<T>& t);

/// Whether an op over `inputs` should be recorded.
template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs);
template <typename T>
bool should_record(std::span<const Tensor<T>> inputs);

/// Builds an op result, rejecting non-finite values, and records it when
/// recording is on. Entry point for ops defined outside the core.
template <typename T>
Tensor<T> make_op_result(std::string_view op, Shape shape, std::vector<T> data,
                         std::span<const Tensor<T>> inputs, BackwardFn<T> fn);

/// Throws NumericalError naming `op` when `values` holds NaN or Inf.
template <typename T>
void check_finite(std::span<const T> values, std::string_view op);

}  // namespace stp
