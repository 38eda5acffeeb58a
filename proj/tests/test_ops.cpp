#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "uma/errors.hpp"
#include "uma/grad_check.hpp"
#include "uma/ops.hpp"
#include "uma/verify.hpp"

using namespace uma;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Direct nested-loop convolution, HWC input and k x k x Cin x Cout kernel.
std::vector<double> conv_oracle(const Tensor& in, const Tensor& k, const Tensor& b, std::size_t stride) {
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2), K = k.dim(0), O = k.dim(3);
  const std::size_t oh = (H - K) / stride + 1, ow = (W - K) / stride + 1;
  std::vector<double> out(oh * ow * O);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t o = 0; o < O; ++o) {
        double acc = b[o];
        for (std::size_t dy = 0; dy < K; ++dy)
          for (std::size_t dx = 0; dx < K; ++dx)
            for (std::size_t c = 0; c < C; ++c)
              acc += in[((y * stride + dy) * W + x * stride + dx) * C + c] * k[((dy * K + dx) * C + c) * O + o];
        out[(y * ow + x) * O + o] = acc;
      }
  return out;
}

}  // namespace

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(1);
  Tensor in = random_tensor({4, 5, 1}, rng);
  Tensor out = conv2d(in, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0), 1);
  ASSERT_EQ(out.shape(), in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i], in[i]);
}

TEST(Conv2d, ZeroInputPassesBias) {
  Tensor out = conv2d(Tensor({5, 5, 2}, 0.0), Tensor({3, 3, 2, 2}, 0.3), Tensor({2}, 0.7), 1);
  for (double v : out.data()) EXPECT_EQ(v, 0.7);
}

TEST(Conv2d, MatchesLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t stride = 1 + seed % 2;
    Tensor in = random_tensor({5 + seed % 3, 6, 2}, rng), k = random_tensor({3, 3, 2, 1 + seed % 3}, rng);
    Tensor b = random_tensor({k.dim(3)}, rng);
    Tensor out = conv2d(in, k, b, stride);
    const auto want = conv_oracle(in, k, b, stride);
    ASSERT_EQ(out.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out[i], want[i], 1e-12);
  }
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
  try {
    conv2d(Tensor({5, 5, 2}), Tensor({3, 3, 3, 1}), Tensor({1}), 1);
    FAIL();
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("5x5x2"), std::string::npos) << what;
    EXPECT_NE(what.find("3x3x3x1"), std::string::npos) << what;
  }
}

TEST(Elementwise, ReluAndSigmoidValues) {
  Tensor r = relu(Tensor::vector({-1, 0, 2}));
  EXPECT_EQ(r[0], 0);
  EXPECT_EQ(r[1], 0);
  EXPECT_EQ(r[2], 2);
  EXPECT_EQ(sigmoid(Tensor::vector({0}))[0], 0.5);
  EXPECT_NEAR(sigmoid(Tensor::vector({std::log(3.0)}))[0], 0.75, 1e-15);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  Tensor x = Tensor::vector({0.0});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope s(tape);
    tape.backward(sum(relu(x)));
  }
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Elementwise, ExtremeInputsStayFinite) {
  Tensor x = Tensor::vector({-800, -30, 0, 30, 800});
  for (const Tensor& y : {sigmoid(x), softplus(x), softmax(x), log_softmax(x)}) {
    for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_NEAR(softplus(x)[4], 800, 1e-12);
  EXPECT_TRUE(std::isfinite(logsumexp(x).item()));
}

TEST(MaxPool, ConstantAndSmallCases) {
  Tensor c = max_pool2d(Tensor({4, 4, 2}, 3.25), 2, 2);
  for (double v : c.data()) EXPECT_EQ(v, 3.25);
  Tensor m = max_pool2d(Tensor({2, 2, 1}, std::vector<double>{1, 2, 3, 4}), 2, 2);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0], 4);
}

TEST(MaxPool, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  Tensor in = random_tensor({6, 6, 3}, rng);
  Tensor out = max_pool2d(in, 2, 2);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double best = -1e300;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, in[((2 * y + dy) * 6 + 2 * x + dx) * 3 + c]);
        EXPECT_EQ(out[(y * 3 + x) * 3 + c], best);
      }
}

TEST(MaxPool, TiesRouteGradientToFirstCell) {
  Tensor in({2, 2, 1}, 1.0);
  in.set_requires_grad(true);
  Tape tape;
  {
    TapeScope s(tape);
    tape.backward(sum(max_pool2d(in, 2, 2)));
  }
  EXPECT_EQ(in.grad()[0], 1.0);
  EXPECT_EQ(in.grad()[1] + in.grad()[2] + in.grad()[3], 0.0);
}

TEST(MaxPool, WindowLargerThanInput) {
  EXPECT_THROW(max_pool2d(Tensor({2, 2, 1}), 3, 1), DimensionError);
}

TEST(GlobalAvgPool, Values) {
  std::mt19937_64 rng(4);
  Tensor one = random_tensor({1, 1, 5}, rng);
  Tensor g1 = global_avg_pool(one);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(g1[c], one[c]);
  Tensor in = random_tensor({6, 6, 4}, rng);
  Tensor g = global_avg_pool(in);
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (std::size_t p = 0; p < 36; ++p) s += in[p * 4 + c];
    EXPECT_NEAR(g[c], s / 36, 1e-12);
  }
  EXPECT_EQ(global_avg_pool(Tensor({3, 2, 1}, 5.0))[0], 5.0);
}

TEST(FullyConnected, Values) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({4}, rng);
  Tensor eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1;
  Tensor y = fully_connected(x, eye, Tensor({4}, 0.0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], x[i]);
  Tensor b = random_tensor({3}, rng);
  Tensor z = fully_connected(x, Tensor({3, 4}, 0.0), b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(z[i], b[i]);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor r = fully_connected(x, w, b);
  for (std::size_t o = 0; o < 3; ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < 4; ++i) acc += w[o * 4 + i] * x[i];
    EXPECT_NEAR(r[o], acc, 1e-12);
  }
  EXPECT_THROW(fully_connected(x, random_tensor({3, 5}, rng), b), DimensionError);
}

TEST(Softmax, KnownValues) {
  Tensor u = softmax(Tensor({4}, -2.5));
  for (double v : u.data()) EXPECT_NEAR(v, 0.25, 1e-15);
  Tensor s = softmax(Tensor::vector({0, std::log(3.0)}));
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, PropertySumsToOneAndShiftInvariant) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor x = random_tensor({1 + seed % 9}, rng, -20, 20);
    Tensor shifted = add_scalar(x, 100);
    Tensor p = softmax(x), q = softmax(shifted);
    double total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GT(p[i], 0);
      EXPECT_LT(std::abs(p[i] - q[i]), 1e-12);
      total += p[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(L2Normalize, UnitLengthAndZeroRejected) {
  Tensor v = l2_normalize(Tensor::vector({3, 4}));
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  EXPECT_THROW(l2_normalize(Tensor({3}, 0.0)), ContractError);
}

TEST(RoiAlign, ConstantMapAndCellCentres) {
  Tensor f({4, 4, 2}, 0.0);
  for (std::size_t i = 0; i < 16; ++i) {
    f[i * 2] = static_cast<double>(i);
    f[i * 2 + 1] = -1;
  }
  // A 1x1 output over a box centred on cell (1, 2) reads that cell exactly.
  Tensor a = roi_align(f, RoiBox{1.5, 0.5, 2.5, 1.5}, 1);
  EXPECT_DOUBLE_EQ(a[0], 6);
  EXPECT_DOUBLE_EQ(a[1], -1);
  // Halfway between cells (1,1) and (1,2) along x.
  Tensor h = roi_align(f, RoiBox{1.0, 0.5, 2.0, 1.5}, 1);
  EXPECT_DOUBLE_EQ(h[0], 5.5);
}

TEST(BranchTrace, DetectsReluSignChange) {
  Tensor x = Tensor::vector({0.5, -0.5});
  std::uint64_t a = 0, b = 0, c = 0;
  {
    BranchTrace t;
    relu(x);
    a = t.fingerprint();
  }
  {
    BranchTrace t;
    relu(Tensor::vector({0.7, -0.1}));
    b = t.fingerprint();
  }
  {
    BranchTrace t;
    relu(Tensor::vector({-0.1, -0.1}));
    c = t.fingerprint();
  }
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(GradCheck, QuadraticBowl) {
  Tensor w = Tensor::vector({0.3, -1.2, 2.0});
  w.set_requires_grad(true);
  const auto r = grad_check([&] { return dot(w, w); }, {w});
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(r.elements_checked, 3u);
}

TEST(GradCheck, ConvReluComposite) {
  std::mt19937_64 rng(9);
  Tensor in = random_tensor({6, 6, 2}, rng), k = random_tensor({3, 3, 2, 2}, rng), b = random_tensor({2}, rng);
  in.set_requires_grad(true);
  k.set_requires_grad(true);
  b.set_requires_grad(true);
  const auto r = grad_check([&] { return sum(mul(relu(conv2d(in, k, b, 1)), relu(conv2d(in, k, b, 1)))); }, {in, k, b});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, CorruptedBackwardIsCaught) {
  // A hand-built op whose backward rule is off by a factor of two.
  Tensor w = Tensor::vector({0.4, -0.9});
  w.set_requires_grad(true);
  auto broken_square = [&] {
    Tensor out = Tensor::scalar(w[0] * w[0] + w[1] * w[1]);
    if (Tape* tape = active_tape()) {
      out.set_requires_grad(true);
      Tensor in = w;
      tape->record({in}, out, [in, out]() {
        auto g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad()[0] * 4 * in[i];
      });
    }
    return out;
  };
  EXPECT_GT(grad_check(broken_square, {w}).max_relative_error, 1e-2);
}

TEST(GradCheck, NonFiniteProbeNamesParameter) {
  // exp(709) is finite; the +h probe pushes the exponent past the overflow point.
  Tensor a = Tensor::vector({1.0}), b = Tensor::vector({1e-5});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  try {
    grad_check([&] { return add(sum(a), sum(exp(scale(b, 7.09e7)))); }, {a, b});
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter 1"), std::string::npos) << e.what();
  }
}

TEST(GradCheck, EveryOpOnSeveralSeeds) {
  // The acceptance sweep runs 100 seeds; a few here keep ctest quick.
  const auto sweep = grad_sweep(3, 11);
  EXPECT_LT(sweep.max_relative_error, 1e-4) << sweep.worst_case << " seed " << sweep.worst_seed;
  EXPECT_GE(sweep.per_case.size(), 30u);
}

TEST(Forward, FiniteInputsGiveFiniteOutputs) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor in = random_tensor({7, 7, 2}, rng, -50, 50), k = random_tensor({3, 3, 2, 3}, rng, -50, 50);
    Tensor y = l2_normalize(global_avg_pool(sigmoid(max_pool2d(conv2d(in, k, Tensor({3}, 0.0), 1), 2, 1))));
    for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
  }
}
