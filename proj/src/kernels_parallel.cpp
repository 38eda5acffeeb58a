#include "uma/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uma::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const double* in = input.data();
  const double* ker = kernel.data();
  double* out = output.data();

#pragma omp parallel for schedule(static)
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      double* o = out + (oi * ow + oj) * cout;
      for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
      for (std::size_t ki = 0; ki < g.kernel; ++ki) {
        for (std::size_t kj = 0; kj < g.kernel; ++kj) {
          const double* x = in + ((oi * g.stride + ki) * g.width + oj * g.stride + kj) * cin;
          const double* w = ker + (ki * g.kernel + kj) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double a = x[ci];
            const double* wr = w + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += a * wr[co];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const double* gout = grad_output.data();
  const double* ker = kernel.data();
  double* gin = grad_input.data();

  // Gather form: each input row is owned by one thread.
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < g.height; ++i) {
    for (std::size_t j = 0; j < g.width; ++j) {
      double* gi = gin + (i * g.width + j) * cin;
      for (std::size_t ki = 0; ki < g.kernel && ki <= i; ++ki) {
        if ((i - ki) % g.stride != 0) continue;
        const std::size_t oi = (i - ki) / g.stride;
        if (oi >= oh) continue;
        for (std::size_t kj = 0; kj < g.kernel && kj <= j; ++kj) {
          if ((j - kj) % g.stride != 0) continue;
          const std::size_t oj = (j - kj) / g.stride;
          if (oj >= ow) continue;
          const double* go = gout + (oi * ow + oj) * cout;
          const double* w = ker + (ki * g.kernel + kj) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* wr = w + ci * cout;
            double acc = 0.0;
            for (std::size_t co = 0; co < cout; ++co) acc += go[co] * wr[co];
            gi[ci] += acc;
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_kernel) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const std::size_t taps = g.kernel * g.kernel;
  const double* in = input.data();
  const double* gout = grad_output.data();
  double* gker = grad_kernel.data();

#pragma omp parallel for schedule(static)
  for (std::size_t tap = 0; tap < taps; ++tap) {
    const std::size_t ki = tap / g.kernel, kj = tap % g.kernel;
    double* gk = gker + tap * cin * cout;
    for (std::size_t oi = 0; oi < oh; ++oi) {
      for (std::size_t oj = 0; oj < ow; ++oj) {
        const double* x = in + ((oi * g.stride + ki) * g.width + oj * g.stride + kj) * cin;
        const double* go = gout + (oi * ow + oj) * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double a = x[ci];
          double* gr = gk + ci * cout;
          for (std::size_t co = 0; co < cout; ++co) gr[co] += a * go[co];
        }
      }
    }
  }
}

void max_pool_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const double* in = input.data();

#pragma omp parallel for schedule(static)
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      for (std::size_t c = 0; c < g.channels; ++c) {
        std::size_t best = (oi * g.stride * g.width + oj * g.stride) * g.channels + c;
        for (std::size_t wi = 0; wi < g.window; ++wi) {
          const std::size_t row = (oi * g.stride + wi) * g.width + oj * g.stride;
          for (std::size_t wj = 0; wj < g.window; ++wj) {
            const std::size_t idx = (row + wj) * g.channels + c;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t out = (oi * ow + oj) * g.channels + c;
        output[out] = in[best];
        argmax[out] = best;
      }
    }
  }
}

void max_pool_backward(const PoolGeometry& g, std::span<const double> grad_output,
                       std::span<const std::size_t> argmax, std::span<double> grad_input) {
  const std::size_t cells = g.out_height() * g.out_width();
  // Overlapping windows may route to the same cell, but never across channels.
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const std::size_t o = cell * g.channels + c;
      grad_input[argmax[o]] += grad_output[o];
    }
  }
}

}  // namespace parallel
}  // namespace uma::kernels
