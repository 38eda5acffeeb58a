#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "uma/errors.hpp"
#include "uma/grad_check.hpp"
#include "uma/network.hpp"

using namespace uma;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(Network, ToyShapes) {
  const auto net = NetworkConfig::toy();
  const auto params = init_params(net, 1);
  EXPECT_EQ(backbone_forward(Tensor({22, 22, 3}, 0.5), net, params).shape(), (Shape{6, 6, 32}));
  EXPECT_EQ(backbone_forward(Tensor({38, 38, 3}, 0.5), net, params).shape(), (Shape{14, 14, 32}));
  EXPECT_EQ(net.feature_side(net.track_instance_size()), 22u);
  EXPECT_EQ(net.embed_dim(), 32u);
}

TEST(Network, FullScaleShapeArithmetic) {
  const auto net = NetworkConfig::full_scale();
  net.validate();
  EXPECT_EQ(net.feature_side(127), 6u);
  EXPECT_EQ(net.feature_side(239), 20u);
  EXPECT_EQ(net.track_instance_size(), 255u);
  EXPECT_EQ(net.feature_side(255), 22u);
  const auto shapes = param_shapes(net);
  EXPECT_EQ(shapes.at("tsa.sot.w1"), (Shape{64, 256}));
  EXPECT_EQ(shapes.at("tsa.aff.w2"), (Shape{256, 64}));
  EXPECT_EQ(shapes.at("iden.fc1.weight"), (Shape{512, 256}));
  EXPECT_EQ(shapes.at("iden.fc2.weight"), (Shape{439, 512}));
}

TEST(Network, WrongPatchSizeRejected) {
  const auto net = NetworkConfig::toy();
  EXPECT_THROW(backbone_forward(Tensor({4, 4, 3}), net, init_params(net, 1)), DimensionError);
}

TEST(Network, ReductionMustDivideChannels) {
  auto net = NetworkConfig::toy();
  net.tsa_reduction = 5;
  EXPECT_THROW(net.validate(), ContractError);
}

TEST(Network, ParamsCheckListsMismatches) {
  const auto net = NetworkConfig::toy();
  auto params = init_params(net, 1);
  params.erase("corr.bias");
  params["tsa.sot.w1"] = Tensor({3, 3});
  params["extra"] = Tensor({1});
  try {
    check_params(net, params);
    FAIL();
  } catch (const ContractError& e) {
    const std::string what = e.what();
    for (const char* name : {"corr.bias", "tsa.sot.w1", "extra"}) EXPECT_NE(what.find(name), std::string::npos) << what;
  }
}

TEST(Network, InitIsSeedDeterministic) {
  const auto net = NetworkConfig::toy();
  const auto a = init_params(net, 3), b = init_params(net, 3), c = init_params(net, 4);
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
  EXPECT_NE(encode_checkpoint(a), encode_checkpoint(c));
}

TEST(CrossCorrelation, Cases) {
  std::mt19937_64 rng(2);
  Tensor fx = random_tensor({4, 4, 2}, rng), fz = random_tensor({2, 2, 2}, rng);
  Tensor b = Tensor::vector({0.3});
  auto zero = cross_correlation(fx, Tensor({2, 2, 2}, 0.0), b);
  for (double v : zero.v.data()) EXPECT_EQ(v, 0.3);
  auto self = cross_correlation(fz, fz, b);
  double ss = 0;
  for (double v : fz.data()) ss += v * v;
  ASSERT_EQ(self.v.size(), 1u);
  EXPECT_NEAR(self.v[0], ss + 0.3, 1e-12);
  auto r = cross_correlation(fx, fz, b);
  ASSERT_EQ(r.v.shape(), (Shape{3, 3}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.3;
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj)
          for (std::size_t c = 0; c < 2; ++c) acc += fx[((i + di) * 4 + j + dj) * 2 + c] * fz[(di * 2 + dj) * 2 + c];
      EXPECT_NEAR(r.v[i * 3 + j], acc, 1e-12);
    }
  EXPECT_THROW(cross_correlation(fx, Tensor({2, 2, 3}), b), DimensionError);
}

TEST(CrossCorrelation, PropertyBilinearInInstance) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor fx = random_tensor({5, 5, 3}, rng), fz = random_tensor({3, 3, 3}, rng), b = Tensor::vector({0});
    const double alpha = std::uniform_real_distribution<double>(-3, 3)(rng);
    auto base = cross_correlation(fx, fz, b), scaled = cross_correlation(scale(fx, alpha), fz, b);
    for (std::size_t i = 0; i < base.v.size(); ++i) EXPECT_NEAR(scaled.v[i], alpha * base.v[i], 1e-12);
  }
}

TEST(Tsa, ZeroWeightsHalveFeature) {
  auto net = NetworkConfig::toy();
  auto params = init_params(net, 1);
  for (const char* n : {"tsa.sot.w1", "tsa.sot.w2"}) {
    for (auto& v : params.at(n).data()) v = 0;
  }
  std::mt19937_64 rng(5);
  Tensor f = random_tensor({6, 6, 32}, rng);
  Tensor out = tsa_attention(f, Task::Sot, params);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], f[i] / 2);
  Tensor zero = tsa_attention(Tensor({6, 6, 32}, 0.0), Task::Aff, init_params(net, 2));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tsa, PropertyGatesStrictlyInsideUnitInterval) {
  const auto net = NetworkConfig::toy();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto params = init_params(net, seed);
    std::mt19937_64 rng(seed);
    Tensor f = random_tensor({6, 6, 32}, rng);
    for (Task t : {Task::Sot, Task::Aff}) {
      Tensor a = tsa_gates(f, t, params);
      Tensor out = tsa_attention(f, t, params);
      for (std::size_t l = 0; l < 32; ++l) {
        EXPECT_GT(a[l], 0.0);
        EXPECT_LT(a[l], 1.0);
        EXPECT_NEAR(out[l], a[l] * f[l], 1e-15);
      }
    }
  }
}

TEST(RoiAlign, GridAlignedBoxIsCrop) {
  std::mt19937_64 rng(6);
  Tensor f = random_tensor({10, 10, 2}, rng);
  // Bins one cell wide whose centres land on cells 2..7.
  Tensor a = roi_align(f, RoiBox{1.5, 2.5, 7.5, 8.5}, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a[(i * 6 + j) * 2 + c], f[((i + 3) * 10 + j + 2) * 2 + c], 1e-12);
}

TEST(RoiAlign, ConstantMapGivesConstant) {
  Tensor f({8, 8, 3}, 2.5);
  Tensor a = roi_align(f, RoiBox{0.3, 1.1, 5.2, 3.9}, 6);
  for (double v : a.data()) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(RoiAlign, MatchesBilinearOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor f = random_tensor({10, 10, 2}, rng);
    std::uniform_real_distribution<double> lo(0, 4), len(1, 5);
    RoiBox box;
    box.x0 = lo(rng);
    box.y0 = lo(rng);
    box.x1 = box.x0 + len(rng);
    box.y1 = box.y0 + len(rng);
    Tensor a = roi_align(f, box, 6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        const double y = box.y0 + (i + 0.5) * box.height() / 6, x = box.x0 + (j + 0.5) * box.width() / 6;
        const double y0 = std::floor(y), x0 = std::floor(x), ty = y - y0, tx = x - x0;
        for (std::size_t c = 0; c < 2; ++c) {
          auto at = [&](double yy, double xx) {
            return f[(static_cast<std::size_t>(yy) * 10 + static_cast<std::size_t>(xx)) * 2 + c];
          };
          const double want = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                              ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
          EXPECT_NEAR(a[(i * 6 + j) * 2 + c], want, 1e-12);
        }
      }
  }
}

TEST(RoiAlign, DegenerateBoxRejected) {
  EXPECT_THROW(roi_align(Tensor({4, 4, 1}), RoiBox{1, 1, 1, 3}, 2), ContractError);
}

TEST(Embed, UnitNormAndAffinity) {
  Tensor f({6, 6, 4}, 0.0);
  for (std::size_t p = 0; p < 36; ++p) f[p * 4 + 2] = 3.0;
  Tensor w = embed(f);
  EXPECT_NEAR(w[2], 1.0, 1e-15);
  EXPECT_THROW(embed(Tensor({6, 6, 4}, 0.0)), ContractError);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    Tensor e = embed(random_tensor({6, 6, 4}, rng));
    double n = 0;
    for (double v : e.data()) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
    EXPECT_NEAR(affinity(e, e), 1.0, 1e-12);
    EXPECT_NEAR(affinity(e, scale(e, -1)), -1.0, 1e-12);
  }
  EXPECT_EQ(affinity(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
}

TEST(IdentityHead, Lengths) {
  auto net = NetworkConfig::toy();
  auto params = init_params(net, 1);
  EXPECT_EQ(identity_logits(Tensor({32}, 0.1), params).size(), 20u);
  for (auto& [name, t] : params) {
    if (name.rfind("iden.", 0) == 0) {
      for (auto& v : t.data()) v = 0;
    }
  }
  const Tensor logits = identity_logits(Tensor({32}, 0.1), params);
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
  const auto full = param_shapes(NetworkConfig::full_scale());
  EXPECT_EQ(full.at("iden.fc2.bias"), (Shape{439}));
}

TEST(Network, ForwardGraphGradientCheck) {
  const auto net = NetworkConfig::toy();
  auto params = init_params(net, 12);
  std::mt19937_64 rng(12);
  Tensor z = random_tensor({22, 22, 3}, rng, 0, 1), x = random_tensor({38, 38, 3}, rng, 0, 1);
  auto fn = [&] {
    Tensor fz = backbone_forward(z, net, params), fx = backbone_forward(x, net, params);
    Tensor v = sot_response(tsa_attention(fx, Task::Sot, params), tsa_attention(fz, Task::Sot, params), net, params).v;
    Tensor wz = embed(tsa_attention(fz, Task::Aff, params));
    Tensor wx = roi_embedding(tsa_attention(fx, Task::Aff, params), centered_roi(net, 38, 11, 15), net);
    return add(sum(mul(v, v)), dot(wz, wx));
  };
  std::vector<Tensor> list;
  for (auto& [name, t] : params) {
    if (name.rfind("iden.", 0) != 0) list.push_back(t);
  }
  GradCheckOptions o;
  o.max_elements_per_param = 3;
  o.seed = 12;
  EXPECT_LT(grad_check(fn, list, o).max_relative_error, 1e-4);
}
