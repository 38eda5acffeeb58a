#include "uma/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "uma/errors.hpp"

namespace uma {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : Tensor(Shape{1}) {}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data); }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(Tensor scalar_output) {
  if (scalar_output.size() != 1) {
    throw ContractError("backward() needs a scalar output, got shape " +
                        shape_string(scalar_output.shape()));
  }
  for (auto& entry : entries_) {
    for (auto& input : entry.inputs) {
      if (input.requires_grad()) input.grad_buffer();
    }
  }
  scalar_output.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& scalar_output) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw ContractError("backward() called without an active tape");
  tape->backward(scalar_output);
}

}  // namespace uma
