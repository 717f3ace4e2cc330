#include "stpred/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace stp {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (Index e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

std::atomic<std::uint64_t> g_next_tape_id{1};

template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
  validate_shape(shape);
  impl_->data.assign(static_cast<std::size_t>(stp::numel(shape)), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorImpl<T>>()) {
  validate_shape(shape);
  if (static_cast<Index>(data.size()) != stp::numel(shape))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename T>
Index Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  impl_->param_derived = on && impl_->node < 0;
  if (!on) impl_->grad.clear();
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(impl_->shape, impl_->data);
  out.set_requires_grad(impl_->requires_grad);
  return out;
}

template <typename T>
Tape<T>::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  activation_bytes_ = 0;
}

template <typename T>
void Tape<T>::record(const Tensor<T>& out, std::string_view op, bool activation, BackwardFn<T> fn) {
  auto* impl = out.impl();
  impl->tape_id = id_;
  impl->node = static_cast<std::int64_t>(nodes_.size());
  if (activation) activation_bytes_ += impl->data.size() * sizeof(T);
  nodes_.push_back(Node{out.impl_ptr(), op, std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw GradError("backward: undefined loss");
  if (loss.numel() != 1)
    throw GradError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  const auto* impl = loss.impl();
  if (impl->tape_id != id_ || impl->node < 0 ||
      impl->node >= static_cast<std::int64_t>(nodes_.size()) ||
      nodes_[static_cast<std::size_t>(impl->node)].out.get() != impl)
    throw GradError("backward: loss was not produced on this tape");
  grad_slot(loss)[0] += T(1);
  for (std::int64_t i = impl->node; i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.out->grad.empty()) continue;
    node.fn(std::span<const T>(node.out->grad));
  }
}

template <typename T>
Tape<T>* active_tape() {
  return active_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(active_slot<T>()) {
  active_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(active_slot<T>()) {
  active_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  active_slot<T>() = previous_;
}

template <typename T>
std::span<T> grad_slot(const Tensor<T>& t) {
  auto* impl = t.impl();
  if (!impl->requires_grad) return {};
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
  return impl->grad;
}

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_slot<T>() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
bool should_record(std::span<const Tensor<T>> inputs) {
  if (active_slot<T>() == nullptr) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

template <typename T>
void check_finite(std::span<const T> values, std::string_view op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << op << ": non-finite value " << values[i] << " at flat index " << i;
      throw NumericalError(os.str());
    }
  }
}

template <typename T>
Tensor<T> make_op_result(std::string_view op, Shape shape, std::vector<T> data,
                         std::span<const Tensor<T>> inputs, BackwardFn<T> fn) {
  check_finite<T>(data, op);
  Tensor<T> out(std::move(shape), std::move(data));
  if (should_record<T>(inputs)) {
    bool param_derived = true;
    for (const auto& t : inputs) param_derived = param_derived && t.impl()->param_derived;
    auto* impl = out.impl();
    impl->requires_grad = true;
    impl->param_derived = param_derived;
    active_slot<T>()->record(out, op, !param_derived && out.rank() > 0, std::move(fn));
  }
  return out;
}

#define STP_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                 \
  template class Tape<T>;                                                                   \
  template class TapeScope<T>;                                                              \
  template class NoGradScope<T>;                                                            \
  template Tape<T>* active_tape<T>();                                                       \
  template std::span<T> grad_slot<T>(const Tensor<T>&);                                     \
  template bool should_record<T>(std::initializer_list<const Tensor<T>*>);                  \
  template bool should_record<T>(std::span<const Tensor<T>>);                               \
  template void check_finite<T>(std::span<const T>, std::string_view);                      \
  template Tensor<T> make_op_result<T>(std::string_view, Shape, std::vector<T>,             \
                                       std::span<const Tensor<T>>, BackwardFn<T>);

STP_INSTANTIATE(float)
STP_INSTANTIATE(double)

#undef STP_INSTANTIATE

}  // namespace stp
