#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "uma/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward value
// eagerly and, when a tape is active and an input requires a gradient,
// records its backward rule on that tape.

namespace uma {

// Elementwise arithmetic on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
/// Natural log; inputs must be positive.
Tensor log(const Tensor& x);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
/// Flattens and joins the inputs into one vector.
Tensor concat(const std::vector<Tensor>& parts);
/// Element `index` of the flattened tensor as a scalar.
Tensor select(const Tensor& x, std::size_t index);

/// weight [Dout x Din] times input [Din].
Tensor matvec(const Tensor& weight, const Tensor& input);
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Softmax over a vector, with max subtraction.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
/// log(sum(exp(x))) over all elements, as a scalar.
Tensor logsumexp(const Tensor& x);

/// Valid convolution. input [H x W x Cin], kernel [k x k x Cin x Cout], bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride);
/// Channel-wise max over window x window patches. Gradient goes to the first maximum.
Tensor max_pool2d(const Tensor& input, std::size_t window, std::size_t stride);
/// [H x W x C] -> [C], the spatial mean per channel.
Tensor global_avg_pool(const Tensor& input);
/// Multiplies channel l of f [H x W x C] by gates[l].
Tensor channel_scale(const Tensor& f, const Tensor& gates);
/// v / ||v||_2. Throws ContractError on a zero vector.
Tensor l2_normalize(const Tensor& v);

/// Rectangle in feature-map coordinates. Cell (i, j) is centred at (x=j, y=i)
/// and covers [j - 0.5, j + 0.5] x [i - 0.5, i + 0.5].
struct RoiBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

/// True when the box overlaps the H x W grid with positive area.
bool roi_intersects(const RoiBox& box, std::size_t height, std::size_t width);

/// Samples f [H x W x C] at the centres of an out_side x out_side grid of bins
/// laid over `box`, each by bilinear interpolation from the four nearest cells.
Tensor roi_align(const Tensor& f, const RoiBox& box, std::size_t out_side);

/// While alive, relu and max_pool2d on this thread fold the branch they take
/// for every element (sign of the input, chosen window cell) into a
/// fingerprint. Two evaluations with equal fingerprints lie on the same
/// smooth piece of the function.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void mix(std::uint64_t value);

 private:
  std::uint64_t hash_ = 1469598103934665603ull;
  BranchTrace* previous_;
};

}  // namespace uma
