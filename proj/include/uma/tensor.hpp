#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uma {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Tensor is a handle: copies share storage, so a parameter can be held by the
/// network and by the tape at once. Use clone() for an independent copy.
/// The gradient buffer is allocated lazily and always mirrors the data shape.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& operator[](std::size_t i) { return impl_->data[i]; }

  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Gradient buffer, zero-initialized on first access.
  std::span<double> grad_buffer() const;
  void zero_grad() const;
  void drop_grad() { impl_->grad.clear(); }

  /// Deep copy of the values, detached from any tape.
  Tensor clone() const;
  bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations record themselves on the thread's active tape (see TapeScope)
/// when at least one input requires a gradient. backward() replays the
/// entries in reverse recording order, each exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  /// Seeds d(output)/d(output) = 1 and propagates to every recorded input.
  void backward(Tensor scalar_output);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Makes a tape active on the current thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Convenience: backward on the active tape.
void backward(const Tensor& scalar_output);

}  // namespace uma
