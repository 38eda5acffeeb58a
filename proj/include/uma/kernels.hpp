#pragma once

#include <cstddef>
#include <span>

// Raw numeric kernels behind the differentiable ops. Two implementations share
// one signature set: `reference` is the plain serial loop nest kept as the
// ground truth for tests and benchmarks; `parallel` distributes the outer loop
// with OpenMP. In `parallel` every output element is owned by a single thread
// and accumulated in a fixed order, so results do not depend on thread count.
//
// Layouts: feature maps are H x W x C row-major, kernels k x k x Cin x Cout.

namespace uma::kernels {

struct ConvGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t in_channels = 0;
  std::size_t kernel = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;

  std::size_t out_height() const { return (height - kernel) / stride + 1; }
  std::size_t out_width() const { return (width - kernel) / stride + 1; }
};

struct PoolGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t window = 0;
  std::size_t stride = 1;

  std::size_t out_height() const { return (height - window) / stride + 1; }
  std::size_t out_width() const { return (width - window) / stride + 1; }
};

namespace reference {
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
// Accumulates into grad_input.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input);
// Accumulates into grad_kernel.
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_kernel);
// argmax receives the flat input index chosen for every output cell; ties go
// to the first cell in row-major window order.
void max_pool_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax);
// Accumulates into grad_input.
void max_pool_backward(const PoolGeometry& g, std::span<const double> grad_output,
                       std::span<const std::size_t> argmax, std::span<double> grad_input);
}  // namespace reference

namespace parallel {
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
// Accumulates into grad_input.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input);
// Accumulates into grad_kernel.
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_kernel);
// argmax receives the flat input index chosen for every output cell; ties go
// to the first cell in row-major window order.
void max_pool_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax);
// Accumulates into grad_input.
void max_pool_backward(const PoolGeometry& g, std::span<const double> grad_output,
                       std::span<const std::size_t> argmax, std::span<double> grad_input);
}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace uma::kernels
