#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include "uma/errors.hpp"
#include "uma/synthetic.hpp"
#include "uma/training.hpp"

using namespace uma;

namespace {

const Dataset& small_dataset() {
  static const Dataset data = [] {
    SyntheticSpec spec;
    spec.width = 200;
    spec.height = 160;
    spec.frames = 30;
    spec.identities = 10;
    spec.seed = 5;
    return Dataset::from_sequences({gen_synthetic_sequence(spec)});
  }();
  return data;
}

TrainOptions small_options() {
  TrainOptions o;
  o.net = NetworkConfig::toy();
  o.train.epochs = 1;
  o.train.steps_per_epoch = 2;
  o.train.batch_size = 4;
  o.seed = 9;
  return o;
}

bool bitwise_equal(const NetworkParams& a, const NetworkParams& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    const auto& u = b.at(name);
    if (t.shape() != u.shape()) return false;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (std::memcmp(&t.data()[i], &u.data()[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(Dataset, IdentitiesAndFrameLimit) {
  EXPECT_EQ(small_dataset().num_identities(), 10u);
  SyntheticSpec spec;
  spec.frames = 20;
  spec.identities = 3;
  const auto limited = Dataset::from_sequences({gen_synthetic_sequence(spec)}, 8);
  for (const auto& obs : limited.identities) {
    EXPECT_EQ(obs.size(), 8u);
    for (const auto& o : obs) EXPECT_LE(o.frame, 8);
  }
}

TEST(SampleBatch, DistinctIdentitiesAndShapes) {
  const auto o = small_options();
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = sample_batch(small_dataset(), 6, o.net, o.train, rng);
    ASSERT_EQ(batch.size(), 6u);
    std::set<std::size_t> labels;
    for (const auto& s : batch) {
      labels.insert(s.label);
      EXPECT_EQ(s.exemplar.shape(), (Shape{22, 22, 3}));
      EXPECT_EQ(s.instance.shape(), (Shape{38, 38, 3}));
      EXPECT_NE(s.frame_gap, 0);
      EXPECT_LE(std::abs(s.frame_gap), o.train.max_frame_gap);
      EXPECT_LE(std::abs(s.offset_x), o.train.jitter);
      EXPECT_LE(std::abs(s.offset_y), o.train.jitter);
    }
    EXPECT_EQ(labels.size(), 6u);
  }
}

TEST(SampleBatch, DeterministicForSeed) {
  const auto o = small_options();
  std::mt19937_64 a(3), b(3);
  const auto x = sample_batch(small_dataset(), 4, o.net, o.train, a);
  const auto y = sample_batch(small_dataset(), 4, o.net, o.train, b);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(x[i].label, y[i].label);
    EXPECT_TRUE(std::ranges::equal(x[i].instance.data(), y[i].instance.data()));
  }
}

TEST(SampleBatch, TooFewIdentities) {
  const auto o = small_options();
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_batch(small_dataset(), 11, o.net, o.train, rng), ContractError);
}

TEST(SampleBatch, PropertyIdentityChoiceIsUniform) {
  // Chi-square over 1000 batches of 4 from 10 identities. Critical value
  // for 9 degrees of freedom at p = 0.001 is 27.88.
  auto o = small_options();
  std::mt19937_64 rng(11);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 1000; ++i)
    for (const auto& s : sample_batch(small_dataset(), 4, o.net, o.train, rng)) counts[s.label]++;
  double chi2 = 0;
  for (std::size_t k = 0; k < 10; ++k) {
    const double d = counts[k] - 400.0;
    chi2 += d * d / 400.0;
  }
  EXPECT_LT(chi2, 27.88);
}

TEST(LearningRate, GeometricSchedule) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0), 1e-2);
  EXPECT_NEAR(learning_rate(c, 29), 1e-4, 1e-18);
  EXPECT_NEAR(learning_rate(c, 1) / learning_rate(c, 0), learning_rate(c, 20) / learning_rate(c, 19), 1e-12);
}

TEST(Sgd, PlainStepAndVelocityDecay) {
  NetworkParams p;
  p["w"] = Tensor::vector({1.0, -2.0});
  p["w"].set_requires_grad(true);
  auto g = p["w"].grad_buffer();
  g[0] = 0.5;
  g[1] = -1.0;
  OptimizerState plain{0.0, {}};
  sgd_momentum_step(p, plain, 0.1);
  EXPECT_DOUBLE_EQ(p["w"][0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p["w"][1], -2.0 + 0.1);

  // With g = 0 after one step the velocity decays by mu per step.
  OptimizerState s{0.9, {}};
  sgd_momentum_step(p, s, 0.1);
  const double v0 = s.velocity["w"][0];
  p["w"].zero_grad();
  for (int k = 1; k <= 5; ++k) {
    sgd_momentum_step(p, s, 0.1);
    EXPECT_NEAR(s.velocity["w"][0], v0 * std::pow(0.9, k), 1e-15);
  }
}

TEST(Sgd, ConvergesOnQuadraticBowl) {
  NetworkParams p;
  p["w"] = Tensor::vector({3.0, -4.0, 1.5});
  p["w"].set_requires_grad(true);
  OptimizerState s{0.9, {}};
  for (int k = 0; k < 200; ++k) {
    auto g = p["w"].grad_buffer();
    for (std::size_t i = 0; i < 3; ++i) g[i] = 2 * p["w"][i];
    sgd_momentum_step(p, s, 0.05);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(p["w"][i]), 1e-3);
}

TEST(Sgd, NonFiniteGradientNamesParameterAndLeavesParams) {
  NetworkParams p;
  p["a"] = Tensor::vector({1.0});
  p["b"] = Tensor::vector({2.0});
  p["a"].grad_buffer()[0] = 1.0;
  p["b"].grad_buffer()[0] = NAN;
  OptimizerState s;
  try {
    sgd_momentum_step(p, s, 0.1);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos) << e.what();
  }
  EXPECT_EQ(p["a"][0], 1.0);
  EXPECT_EQ(p["b"][0], 2.0);
}

TEST(Training, OneSmallStepDecreasesFrozenBatchLoss) {
  const auto o = small_options();
  auto params = init_params(o.net, 2);
  std::mt19937_64 rng(4);
  const auto batch = sample_batch(small_dataset(), 4, o.net, o.train, rng);
  Tape tape;
  double before;
  {
    TapeScope scope(tape);
    const auto l = batch_loss(batch, o.net, o.loss, params);
    before = l.total.item();
    tape.backward(l.total);
  }
  OptimizerState s{0.0, {}};
  sgd_momentum_step(params, s, 1e-4);
  EXPECT_LT(batch_loss(batch, o.net, o.loss, params).total.item(), before);
}

TEST(Training, ZeroEpochsReturnsInitialisation) {
  auto o = small_options();
  o.train.epochs = 0;
  const auto r = train(small_dataset(), o);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(bitwise_equal(r.params, init_params(o.net, o.seed)));
}

TEST(Training, ZeroIdentityWeightLeavesIdentityHead) {
  auto o = small_options();
  o.loss.lambda2 = 0;
  const auto init = init_params(o.net, o.seed);
  const auto r = train(small_dataset(), o);
  for (const auto& [name, t] : r.params) {
    const bool iden = name.rfind("iden.", 0) == 0;
    bool same = true;
    for (std::size_t i = 0; i < t.size(); ++i) same = same && t[i] == init.at(name)[i];
    EXPECT_EQ(same, iden) << name;
  }
}

TEST(Training, BitwiseReproducible) {
  const auto o = small_options();
  const auto a = train(small_dataset(), o), b = train(small_dataset(), o);
  EXPECT_TRUE(bitwise_equal(a.params, b.params));
  EXPECT_EQ(loss_log_csv(a.log), loss_log_csv(b.log));
  ASSERT_EQ(a.log.size(), 2u);
  EXPECT_EQ(a.log[1].epoch, 1u);
  EXPECT_EQ(a.log[1].step, 2u);
}

TEST(Training, TooManyIdentitiesForHead) {
  auto o = small_options();
  o.net.num_identities = 5;
  EXPECT_THROW(train(small_dataset(), o), ContractError);
}

TEST(Training, LossCsvHeader) {
  const std::string csv = loss_log_csv({{1, 1, 0.5, 1.0, 2.0, 0.8}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,step,L_sot,L_npair,L_iden,L_total");
  EXPECT_NE(csv.find("\n1,1,0.5,1,2,0.8\n"), std::string::npos) << csv;
}
