#include "uma/kernels.hpp"

namespace uma::kernels::reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        double acc = bias[co];
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
              const std::size_t i = oi * g.stride + ki, j = oj * g.stride + kj;
              acc += input[(i * g.width + j) * g.in_channels + ci] *
                     kernel[((ki * g.kernel + kj) * g.in_channels + ci) * g.out_channels + co];
            }
          }
        }
        output[(oi * ow + oj) * g.out_channels + co] = acc;
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const double go = grad_output[(oi * ow + oj) * g.out_channels + co];
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
              const std::size_t i = oi * g.stride + ki, j = oj * g.stride + kj;
              grad_input[(i * g.width + j) * g.in_channels + ci] +=
                  go * kernel[((ki * g.kernel + kj) * g.in_channels + ci) * g.out_channels + co];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_kernel) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const double go = grad_output[(oi * ow + oj) * g.out_channels + co];
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
              const std::size_t i = oi * g.stride + ki, j = oj * g.stride + kj;
              grad_kernel[((ki * g.kernel + kj) * g.in_channels + ci) * g.out_channels + co] +=
                  go * input[(i * g.width + j) * g.in_channels + ci];
            }
          }
        }
      }
    }
  }
}

void max_pool_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      for (std::size_t c = 0; c < g.channels; ++c) {
        std::size_t best = (oi * g.stride * g.width + oj * g.stride) * g.channels + c;
        for (std::size_t wi = 0; wi < g.window; ++wi) {
          for (std::size_t wj = 0; wj < g.window; ++wj) {
            const std::size_t idx =
                ((oi * g.stride + wi) * g.width + oj * g.stride + wj) * g.channels + c;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t out = (oi * ow + oj) * g.channels + c;
        output[out] = input[best];
        argmax[out] = best;
      }
    }
  }
}

void max_pool_backward(const PoolGeometry& g, std::span<const double> grad_output,
                       std::span<const std::size_t> argmax, std::span<double> grad_input) {
  const std::size_t n = g.out_height() * g.out_width() * g.channels;
  for (std::size_t o = 0; o < n; ++o) grad_input[argmax[o]] += grad_output[o];
}

}  // namespace uma::kernels::reference
