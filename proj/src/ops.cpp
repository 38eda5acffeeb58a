#include "uma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "uma/errors.hpp"
#include "uma/kernels.hpp"

namespace uma {

namespace {

thread_local BranchTrace* active_trace = nullptr;

Tape* tape_for(std::initializer_list<Tensor> inputs) {
  Tape* tape = active_tape();
  if (tape == nullptr) return nullptr;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, df]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      auto xv = x.data();
      auto yv = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  if (Tape* tape = tape_for({a, b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  if (Tape* tape = tape_for({a, b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  if (Tape* tape = tape_for({a, b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

BranchTrace::BranchTrace() : previous_(active_trace) { active_trace = this; }
BranchTrace::~BranchTrace() { active_trace = previous_; }

void BranchTrace::mix(std::uint64_t value) {
  hash_ = (hash_ ^ value) * 1099511628211ull;
}

Tensor relu(const Tensor& x) {
  if (active_trace != nullptr) {
    for (double v : x.data()) active_trace->mix(v > 0 ? 1 : 0);
  }
  // Subgradient at 0 is 0.
  return unary(x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0)) throw ContractError("log: non-positive input " + std::to_string(v));
  }
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x,
      [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (auto& gx : x.grad_buffer()) gx += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: size mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = tape_for({a, b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out]() mutable {
      const double g = out.grad()[0];
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a[i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  std::vector<double> values;
  for (const auto& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  Tensor out = Tensor::vector(std::move(values));
  Tape* tape = active_tape();
  const bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    tape->record(parts, out, [parts, out]() mutable {
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

Tensor select(const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw DimensionError("select: index " + std::to_string(index) + " out of range for " +
                         shape_string(x.shape()));
  }
  Tensor out = Tensor::scalar(x[index]);
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, index]() mutable { x.grad_buffer()[index] += out.grad()[0]; });
  }
  return out;
}

Tensor matvec(const Tensor& weight, const Tensor& input) {
  if (weight.rank() != 2 || input.rank() != 1 || weight.dim(1) != input.dim(0)) {
    throw DimensionError("matvec: weight " + shape_string(weight.shape()) + " vs input " +
                         shape_string(input.shape()));
  }
  const std::size_t rows = weight.dim(0), cols = weight.dim(1);
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += weight[r * cols + c] * input[c];
    out[r] = acc;
  }
  if (Tape* tape = tape_for({weight, input})) {
    out.set_requires_grad(true);
    tape->record({weight, input}, out, [weight, input, out, rows, cols]() mutable {
      auto g = out.grad();
      if (weight.requires_grad()) {
        auto gw = weight.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * input[c];
        }
      }
      if (input.requires_grad()) {
        auto gi = input.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gi[c] += g[r] * weight[r * cols + c];
        }
      }
    });
  }
  return out;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (bias.rank() != 1 || weight.rank() != 2 || bias.dim(0) != weight.dim(0)) {
    throw DimensionError("fully_connected: weight " + shape_string(weight.shape()) + " vs bias " +
                         shape_string(bias.shape()));
  }
  return add(matvec(weight, input), bias);
}

Tensor softmax(const Tensor& x) {
  const double m = *std::max_element(x.data().begin(), x.data().end());
  Tensor out(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += out[i] = std::exp(x[i] - m);
  for (auto& v : out.data()) v /= total;
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out]() mutable {
      auto g = out.grad();
      double gs = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) gs += g[i] * out[i];
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += out[i] * (g[i] - gs);
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  const double m = *std::max_element(x.data().begin(), x.data().end());
  double total = 0.0;
  for (double v : x.data()) total += std::exp(v - m);
  const double lse = m + std::log(total);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out]() mutable {
      auto g = out.grad();
      double gs = 0.0;
      for (double v : g) gs += v;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(out[i]) * gs;
    });
  }
  return out;
}

Tensor logsumexp(const Tensor& x) {
  const double m = *std::max_element(x.data().begin(), x.data().end());
  double total = 0.0;
  for (double v : x.data()) total += std::exp(v - m);
  const double lse = m + std::log(total);
  Tensor out = Tensor::scalar(lse);
  if (Tape* tape = tape_for({x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, lse]() mutable {
      const double g = out.grad()[0];
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * std::exp(x[i] - lse);
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1) ||
      kernel.dim(2) != input.dim(2) || bias.size() != kernel.dim(3) || input.dim(0) < kernel.dim(0) ||
      input.dim(1) < kernel.dim(0)) {
    throw DimensionError("conv2d: input " + shape_string(input.shape()) + ", kernel " +
                         shape_string(kernel.shape()) + ", bias " + shape_string(bias.shape()));
  }
  kernels::ConvGeometry g;
  g.height = input.dim(0);
  g.width = input.dim(1);
  g.in_channels = input.dim(2);
  g.kernel = kernel.dim(0);
  g.out_channels = kernel.dim(3);
  g.stride = stride;
  Tensor out(Shape{g.out_height(), g.out_width(), g.out_channels});
  kernels::parallel::conv2d_forward(g, input.data(), kernel.data(), bias.data(), out.data());
  if (Tape* tape = tape_for({input, kernel, bias})) {
    out.set_requires_grad(true);
    tape->record({input, kernel, bias}, out, [input, kernel, bias, out, g]() mutable {
      auto go = out.grad();
      if (input.requires_grad()) {
        kernels::parallel::conv2d_backward_input(g, go, kernel.data(), input.grad_buffer());
      }
      if (kernel.requires_grad()) {
        kernels::parallel::conv2d_backward_kernel(g, input.data(), go, kernel.grad_buffer());
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        const std::size_t cells = g.out_height() * g.out_width();
        for (std::size_t p = 0; p < cells; ++p) {
          for (std::size_t co = 0; co < g.out_channels; ++co) gb[co] += go[p * g.out_channels + co];
        }
      }
    });
  }
  return out;
}

Tensor max_pool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ContractError("max_pool2d: window and stride must be positive");
  if (input.rank() != 3 || input.dim(0) < window || input.dim(1) < window) {
    throw DimensionError("max_pool2d: window " + std::to_string(window) + " exceeds input " +
                         shape_string(input.shape()));
  }
  kernels::PoolGeometry g;
  g.height = input.dim(0);
  g.width = input.dim(1);
  g.channels = input.dim(2);
  g.window = window;
  g.stride = stride;
  Tensor out(Shape{g.out_height(), g.out_width(), g.channels});
  std::vector<std::size_t> argmax(out.size());
  kernels::parallel::max_pool_forward(g, input.data(), out.data(), argmax);
  if (active_trace != nullptr) {
    for (std::size_t a : argmax) active_trace->mix(a);
  }
  if (Tape* tape = tape_for({input})) {
    out.set_requires_grad(true);
    tape->record({input}, out, [input, out, g, argmax = std::move(argmax)]() mutable {
      kernels::parallel::max_pool_backward(g, out.grad(), argmax, input.grad_buffer());
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("global_avg_pool: expected H x W x C, got " + shape_string(input.shape()));
  }
  const std::size_t cells = input.dim(0) * input.dim(1), channels = input.dim(2);
  Tensor out(Shape{channels});
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t c = 0; c < channels; ++c) out[c] += input[p * channels + c];
  }
  for (auto& v : out.data()) v /= static_cast<double>(cells);
  if (Tape* tape = tape_for({input})) {
    out.set_requires_grad(true);
    tape->record({input}, out, [input, out, cells, channels]() mutable {
      auto g = out.grad();
      auto gi = input.grad_buffer();
      const double inv = 1.0 / static_cast<double>(cells);
      for (std::size_t p = 0; p < cells; ++p) {
        for (std::size_t c = 0; c < channels; ++c) gi[p * channels + c] += g[c] * inv;
      }
    });
  }
  return out;
}

Tensor channel_scale(const Tensor& f, const Tensor& gates) {
  if (f.rank() != 3 || gates.rank() != 1 || gates.dim(0) != f.dim(2)) {
    throw DimensionError("channel_scale: feature " + shape_string(f.shape()) + " vs gates " +
                         shape_string(gates.shape()));
  }
  const std::size_t channels = f.dim(2), cells = f.dim(0) * f.dim(1);
  Tensor out(f.shape());
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t c = 0; c < channels; ++c) out[p * channels + c] = gates[c] * f[p * channels + c];
  }
  if (Tape* tape = tape_for({f, gates})) {
    out.set_requires_grad(true);
    tape->record({f, gates}, out, [f, gates, out, cells, channels]() mutable {
      auto g = out.grad();
      if (f.requires_grad()) {
        auto gf = f.grad_buffer();
        for (std::size_t p = 0; p < cells; ++p) {
          for (std::size_t c = 0; c < channels; ++c) gf[p * channels + c] += g[p * channels + c] * gates[c];
        }
      }
      if (gates.requires_grad()) {
        auto ga = gates.grad_buffer();
        for (std::size_t p = 0; p < cells; ++p) {
          for (std::size_t c = 0; c < channels; ++c) ga[c] += g[p * channels + c] * f[p * channels + c];
        }
      }
    });
  }
  return out;
}

Tensor l2_normalize(const Tensor& v) {
  double sq = 0.0;
  for (double x : v.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0)) throw ContractError("l2_normalize: zero vector cannot be normalized");
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  if (Tape* tape = tape_for({v})) {
    out.set_requires_grad(true);
    tape->record({v}, out, [v, out, norm]() mutable {
      auto g = out.grad();
      double proj = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) proj += g[i] * out[i];
      auto gv = v.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += (g[i] - out[i] * proj) / norm;
    });
  }
  return out;
}

bool roi_intersects(const RoiBox& box, std::size_t height, std::size_t width) {
  const double left = std::max(box.x0, -0.5), right = std::min(box.x1, width - 0.5);
  const double top = std::max(box.y0, -0.5), bottom = std::min(box.y1, height - 0.5);
  return right > left && bottom > top;
}

namespace {

struct Tap {
  std::size_t cell;
  double weight;
};

// Bilinear taps for one coordinate axis, following the usual ROI-Align
// clamping: samples more than one cell outside the grid contribute nothing.
bool axis_taps(double pos, std::size_t extent, std::size_t& low, std::size_t& high, double& frac) {
  if (pos < -1.0 || pos > static_cast<double>(extent)) return false;
  if (pos <= 0) pos = 0;
  low = static_cast<std::size_t>(std::floor(pos));
  if (low >= extent - 1) {
    low = high = extent - 1;
    frac = 0.0;
  } else {
    high = low + 1;
    frac = pos - static_cast<double>(low);
  }
  return true;
}

}  // namespace

Tensor roi_align(const Tensor& f, const RoiBox& box, std::size_t out_side) {
  if (f.rank() != 3) throw DimensionError("roi_align: expected H x W x C, got " + shape_string(f.shape()));
  if (out_side == 0) throw ContractError("roi_align: output side must be positive");
  if (!(box.width() > 0) || !(box.height() > 0)) throw ContractError("roi_align: degenerate box");
  const std::size_t height = f.dim(0), width = f.dim(1), channels = f.dim(2);
  if (!roi_intersects(box, height, width)) throw ContractError("roi_align: box does not intersect the feature grid");

  const std::size_t bins = out_side * out_side;
  std::vector<Tap> taps;
  std::vector<std::size_t> offsets(bins + 1, 0);
  const double bin_w = box.width() / static_cast<double>(out_side);
  const double bin_h = box.height() / static_cast<double>(out_side);
  for (std::size_t bi = 0; bi < out_side; ++bi) {
    for (std::size_t bj = 0; bj < out_side; ++bj) {
      const double y = box.y0 + (static_cast<double>(bi) + 0.5) * bin_h;
      const double x = box.x0 + (static_cast<double>(bj) + 0.5) * bin_w;
      std::size_t y_lo, y_hi, x_lo, x_hi;
      double ly, lx;
      if (axis_taps(y, height, y_lo, y_hi, ly) && axis_taps(x, width, x_lo, x_hi, lx)) {
        const double hy = 1.0 - ly, hx = 1.0 - lx;
        taps.push_back({y_lo * width + x_lo, hy * hx});
        taps.push_back({y_lo * width + x_hi, hy * lx});
        taps.push_back({y_hi * width + x_lo, ly * hx});
        taps.push_back({y_hi * width + x_hi, ly * lx});
      }
      offsets[bi * out_side + bj + 1] = taps.size();
    }
  }

  Tensor out(Shape{out_side, out_side, channels});
  for (std::size_t b = 0; b < bins; ++b) {
    for (std::size_t t = offsets[b]; t < offsets[b + 1]; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        out[b * channels + c] += taps[t].weight * f[taps[t].cell * channels + c];
      }
    }
  }
  if (Tape* tape = tape_for({f})) {
    out.set_requires_grad(true);
    tape->record({f}, out, [f, out, taps = std::move(taps), offsets = std::move(offsets), bins, channels]() mutable {
      auto g = out.grad();
      auto gf = f.grad_buffer();
      for (std::size_t b = 0; b < bins; ++b) {
        for (std::size_t t = offsets[b]; t < offsets[b + 1]; ++t) {
          for (std::size_t c = 0; c < channels; ++c) {
            gf[taps[t].cell * channels + c] += taps[t].weight * g[b * channels + c];
          }
        }
      }
    });
  }
  return out;
}

}  // namespace uma
