#include "uma/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "uma/association.hpp"
#include "uma/losses.hpp"
#include "uma/metrics.hpp"
#include "uma/network.hpp"
#include "uma/ops.hpp"
#include "uma/tracker.hpp"
#include "uma/training.hpp"

namespace uma {

namespace {

std::string fmt(const char* format, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), format, a);
  return buf;
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  if (grad) t.set_requires_grad(true);
  return t;
}

/// Values with magnitude in [0.1, 1] and random sign, away from the ReLU kink.
Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(shape);
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  t.set_requires_grad(true);
  return t;
}

/// Reduces a tensor to a scalar with fixed random weights.
std::function<Tensor(const Tensor&)> projector(const Shape& shape, std::mt19937_64& rng) {
  Tensor r = random_tensor(shape, rng, -1.0, 1.0, false);
  return [r](const Tensor& y) { return dot(reshape(y, {y.size()}), reshape(r, {r.size()})); };
}

std::vector<Tensor> unit_vectors(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor({dim}, rng, -1.0, 1.0));
  return out;
}

}  // namespace

std::vector<GradCase> grad_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<Tensor()> fn, std::vector<Tensor> params, std::size_t max = 0) {
    cases.push_back({std::move(name), std::move(fn), std::move(params), max});
  };

  {
    Tensor a = random_tensor({2, 3}, rng, -1, 1), b = random_tensor({2, 3}, rng, -1, 1);
    auto p = projector({2, 3}, rng);
    add_case("add", [=] { return p(add(a, b)); }, {a, b});
    add_case("sub", [=] { return p(sub(a, b)); }, {a, b});
    add_case("mul", [=] { return p(mul(a, b)); }, {a, b});
    add_case("scale", [=] { return p(scale(a, -1.7)); }, {a});
    add_case("add_scalar", [=] { return p(add_scalar(a, 0.3)); }, {a});
  }
  {
    Tensor x = away_from_zero({7}, rng);
    auto p = projector({7}, rng);
    add_case("relu", [=] { return p(relu(x)); }, {x});
    Tensor s = random_tensor({7}, rng, -3, 3);
    add_case("sigmoid", [=] { return p(sigmoid(s)); }, {s});
    add_case("exp", [=] { return p(exp(s)); }, {s});
    add_case("softplus", [=] { return p(softplus(s)); }, {s});
    Tensor pos = random_tensor({7}, rng, 0.5, 2.0);
    add_case("log", [=] { return p(log(pos)); }, {pos});
    add_case("sum", [=] { return sum(mul(s, s)); }, {s});
    add_case("mean", [=] { return mean(mul(s, s)); }, {s});
    Tensor t = random_tensor({7}, rng, -1, 1);
    add_case("dot", [=] { return dot(s, t); }, {s, t});
    add_case("softmax", [=] { return p(softmax(s)); }, {s});
    add_case("log_softmax", [=] { return p(log_softmax(s)); }, {s});
    add_case("logsumexp", [=] { return logsumexp(s); }, {s});
    add_case("l2_normalize", [=] { return p(l2_normalize(s)); }, {s});
    add_case("select", [=] { return mul(select(s, 3), select(t, 5)); }, {s, t});
  }
  {
    Tensor a = random_tensor({2, 3}, rng, -1, 1), b = random_tensor({4}, rng, -1, 1);
    auto p = projector({10}, rng);
    add_case("concat", [=] { return p(concat({a, b})); }, {a, b});
    auto q = projector({3, 2}, rng);
    add_case("reshape", [=] { return q(reshape(mul(a, a), {3, 2})); }, {a});
  }
  {
    Tensor w = random_tensor({3, 4}, rng, -1, 1), x = random_tensor({4}, rng, -1, 1), b = random_tensor({3}, rng, -1, 1);
    auto p = projector({3}, rng);
    add_case("matvec", [=] { return p(matvec(w, x)); }, {w, x});
    add_case("fully_connected", [=] { return p(fully_connected(x, w, b)); }, {x, w, b});
  }
  {
    Tensor in = random_tensor({7, 7, 2}, rng, -1, 1), k = random_tensor({3, 3, 2, 3}, rng, -1, 1),
           b = random_tensor({3}, rng, -1, 1);
    auto p1 = projector({5, 5, 3}, rng);
    auto p2 = projector({3, 3, 3}, rng);
    add_case("conv2d", [=] { return p1(conv2d(in, k, b, 1)); }, {in, k, b});
    add_case("conv2d_stride2", [=] { return p2(conv2d(in, k, b, 2)); }, {in, k, b});
    auto p3 = projector({3, 3, 2}, rng);
    add_case("max_pool2d", [=] { return p3(max_pool2d(in, 3, 2)); }, {in});
    auto p4 = projector({2}, rng);
    add_case("global_avg_pool", [=] { return p4(global_avg_pool(mul(in, in))); }, {in});
    Tensor g = random_tensor({2}, rng, 0, 1);
    auto p5 = projector({7, 7, 2}, rng);
    add_case("channel_scale", [=] { return p5(channel_scale(in, g)); }, {in, g});
    std::uniform_real_distribution<double> lo(-0.3, 1.5), hi(3.5, 6.4);
    RoiBox box{lo(rng), lo(rng), hi(rng), hi(rng)};
    auto p6 = projector({4, 4, 2}, rng);
    add_case("roi_align", [=] { return p6(roi_align(in, box, 4)); }, {in});
  }
  {
    Tensor fx = random_tensor({7, 7, 3}, rng, -1, 1), fz = random_tensor({3, 3, 3}, rng, -1, 1),
           b = random_tensor({1}, rng, -1, 1);
    auto p = projector({5, 5}, rng);
    add_case("cross_correlation", [=] { return p(cross_correlation(fx, fz, b).v); }, {fx, fz, b});
  }
  {
    Tensor v = random_tensor({5, 5}, rng, -2, 2);
    const Tensor y = make_label_map(5, 2.0, 2.0);
    add_case("sot_loss", [=] { return sot_loss(v, y); }, {v});
    auto wz = unit_vectors(4, 5, rng), wx = unit_vectors(4, 5, rng);
    std::vector<Tensor> both = wz;
    both.insert(both.end(), wx.begin(), wx.end());
    add_case("triplet_loss", [=] { return triplet_loss(wz, wx, 0.5); }, both);
    add_case("npair_loss", [=] { return npair_loss(wz, wx); }, both);
    auto lz = unit_vectors(3, 4, rng), lx = unit_vectors(3, 4, rng);
    std::vector<Tensor> logits = lz;
    logits.insert(logits.end(), lx.begin(), lx.end());
    add_case("iden_loss", [=] { return iden_loss(lz, lx, {0, 2, 3}); }, logits);
    Tensor a = random_tensor({1}, rng, 0, 2), b = random_tensor({1}, rng, 0, 2), c = random_tensor({1}, rng, 0, 2);
    add_case("total_loss", [=] { return total_loss(a, b, c, LossConfig{}); }, {a, b, c});
  }
  {
    // Composed graph on the toy network: backbone, both attention branches,
    // correlation and all four losses.
    const NetworkConfig net = NetworkConfig::toy();
    NetworkParams params = init_params(net, seed);
    std::normal_distribution<double> small(0.0, 0.05);
    for (auto& [name, t] : params) {
      if (name.find("bias") != std::string::npos) {
        for (auto& v : t.data()) v = small(rng);
      }
    }
    std::vector<TrainSample> batch(2);
    std::uniform_real_distribution<double> offset(-4.0, 4.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i].exemplar = random_tensor({net.exemplar_size, net.exemplar_size, 3}, rng, 0, 1, false);
      batch[i].instance = random_tensor({net.instance_size_train, net.instance_size_train, 3}, rng, 0, 1, false);
      batch[i].label = i * 3;
      batch[i].offset_x = offset(rng);
      batch[i].offset_y = offset(rng);
      batch[i].target_w = 11;
      batch[i].target_h = 15;
    }
    LossConfig loss;
    std::vector<Tensor> list;
    for (auto& [name, t] : params) list.push_back(t);
    add_case(
        "composed_toy_graph",
        [=] {
          const auto out = batch_loss(batch, net, loss, params);
          return add(out.total, scale(triplet_loss(out.w_z, out.w_x, loss.margin), 0.1));
        },
        list, 2);
  }
  return cases;
}

GradSweep grad_sweep(std::size_t seeds, std::uint64_t base_seed, const GradCheckOptions& options) {
  GradSweep sweep;
  std::map<std::string, double> worst;
  std::vector<std::string> order;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + s;
    for (auto& c : grad_cases(seed)) {
      GradCheckOptions o = options;
      o.seed = seed;
      o.max_elements_per_param = c.max_elements_per_param;
      const auto r = grad_check(c.fn, c.params, o);
      sweep.checks += r.elements_checked;
      sweep.skipped += r.elements_skipped;
      if (!worst.count(c.name)) order.push_back(c.name);
      worst[c.name] = std::max(worst[c.name], r.max_relative_error);
      if (r.max_relative_error >= sweep.max_relative_error) {
        sweep.max_relative_error = r.max_relative_error;
        sweep.worst_case = c.name;
        sweep.worst_seed = seed;
      }
    }
  }
  for (const auto& name : order) sweep.per_case.emplace_back(name, worst[name]);
  return sweep;
}

SuiteReport verify_grad(std::size_t seeds, std::uint64_t base_seed) {
  SuiteReport report{"grad", true, {}};
  const auto start = std::chrono::steady_clock::now();
  const auto sweep = grad_sweep(seeds, base_seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& [name, err] : sweep.per_case) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  %-22s max rel err %.3e", name.c_str(), err);
    report.lines.push_back(buf);
  }
  report.passed = sweep.max_relative_error < 1e-4;
  report.lines.push_back(std::to_string(seeds) + " seeds, " + std::to_string(sweep.checks) +
                         " element checks (" +
                         std::to_string(sweep.skipped) + " kink-crossing probes skipped), max relative error " + fmt("%.3e", sweep.max_relative_error) + " (" +
                         sweep.worst_case + ", seed " + std::to_string(sweep.worst_seed) + "), " + fmt("%.1f s", secs));
  return report;
}

namespace {

double brute_force_max(const AffinityMatrix& m) {
  const bool transpose = m.rows > m.cols;
  const std::size_t n = transpose ? m.cols : m.rows;
  const std::size_t k = transpose ? m.rows : m.cols;
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  // Every injection of the n short-side indices into the k long-side ones
  // appears as the prefix of some permutation.
  do {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += transpose ? m(perm[i], i) : m(i, perm[i]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

SuiteReport verify_hungarian(std::size_t trials, std::size_t max_size, std::uint64_t seed) {
  SuiteReport report{"hungarian", true, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t agreements = 0, total = 0;
  for (std::size_t r = 1; r <= max_size; ++r) {
    for (std::size_t c = 1; c <= max_size; ++c) {
      std::size_t agree = 0;
      for (std::size_t t = 0; t < trials; ++t) {
        AffinityMatrix m(r, c);
        for (auto& v : m.values) v = u(rng);
        const double fast = hungarian(m).total;
        const double slow = brute_force_max(m);
        if (std::abs(fast - slow) <= 1e-12 * std::max(1.0, std::abs(slow))) ++agree;
      }
      agreements += agree;
      total += trials;
      if (agree != trials) {
        report.passed = false;
        report.lines.push_back("  " + std::to_string(r) + "x" + std::to_string(c) + ": " + std::to_string(agree) + "/" +
                               std::to_string(trials));
      }
    }
  }
  report.lines.push_back(std::to_string(agreements) + "/" + std::to_string(total) +
                         " brute-force agreements over sizes up to " + std::to_string(max_size) + "x" +
                         std::to_string(max_size));
  return report;
}

namespace {

DetectionRow row(int frame, long id, double x, double y = 10) { return {frame, id, BBox{x, y, 10, 20}, 1.0, {}}; }

}  // namespace

SuiteReport verify_metrics() {
  SuiteReport report{"metrics", true, {}};
  auto check = [&](const std::string& what, bool ok) {
    report.lines.push_back(std::string(ok ? "  pass " : "  FAIL ") + what);
    report.passed = report.passed && ok;
  };

  // Two gt tracks over five frames; one missed box per track, one id switch, one stray box.
  std::vector<DetectionRow> gt, hyp;
  for (int f = 1; f <= 5; ++f) {
    gt.push_back(row(f, 1, 0));
    gt.push_back(row(f, 2, 100));
    if (f != 3) hyp.push_back(row(f, 1, 0));
    if (f <= 2) hyp.push_back(row(f, 2, 100));
    if (f == 3 || f == 4) hyp.push_back(row(f, 3, 100));
  }
  hyp.push_back(row(4, 4, 300));
  const auto m = evaluate("handcrafted", gt, hyp);
  check("handcrafted: MOTA " + fmt("%.6f", m.mota) + ", FP/FN/IDS " + std::to_string(m.fp) + "/" +
            std::to_string(m.fn) + "/" + std::to_string(m.ids),
        m.mota == 0.6 && m.fp == 1 && m.fn == 2 && m.ids == 1);

  std::vector<DetectionRow> gt2, swap;
  for (int f = 1; f <= 10; ++f) {
    gt2.push_back(row(f, 1, 0));
    gt2.push_back(row(f, 2, 100));
    swap.push_back(row(f, f <= 5 ? 1 : 2, 0));
    swap.push_back(row(f, f <= 5 ? 2 : 1, 100));
  }
  const double id = idf1(gt2, swap);
  check("id swap: IDF1 " + fmt("%.6f", id), id == 0.5);

  const auto p = evaluate("perfect", gt2, gt2);
  check("perfect: MOTA/MOTP/IDF1 " + fmt("%.3f", p.mota) + "/" + fmt("%.3f", p.motp) + "/" + fmt("%.3f", p.idf1) +
            ", MT " + fmt("%.1f%%", p.mt) + ", ML " + fmt("%.1f%%", p.ml),
        p.mota == 1.0 && p.motp == 1.0 && p.idf1 == 1.0 && p.mt == 100.0 && p.ml == 0.0);

  for (const auto* r : {&m, &p}) {
    const double identity = 1.0 - static_cast<double>(r->fp + r->fn + r->ids) / static_cast<double>(r->num_gt);
    check(r->sequence + ": MOTA identity", std::abs(identity - r->mota) <= 1e-12);
  }
  return report;
}

SyntheticSpec toy_training_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.name = "toy-train";
  spec.width = 320;
  spec.height = 240;
  spec.frames = 200;
  spec.identities = 20;
  spec.seed = seed;
  return spec;
}

SyntheticSpec occlusion_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.name = "toy-occlusion";
  spec.width = 320;
  spec.height = 240;
  spec.frames = 100;
  spec.seed = seed;
  spec.detection.jitter_sigma = 0.5;
  std::mt19937_64 rng(seed);
  const double starts[3][4] = {{70, 80, 0.4, 0.1}, {220, 70, -0.2, 0.3}, {160, 180, 0.3, -0.2}};
  for (long i = 0; i < 3; ++i) {
    SyntheticTarget t;
    t.id = i + 1;
    t.cx = starts[i][0];
    t.cy = starts[i][1];
    t.vx = starts[i][2];
    t.vy = starts[i][3];
    t.w = 16;
    t.h = 26;
    t.jitter_amplitude = 1.0;
    t.jitter_period = 30 + 10 * static_cast<double>(i);
    for (auto& c : t.color) c = static_cast<std::uint8_t>(40 + rng() % 200);
    t.texture_seed = rng();
    spec.targets.push_back(t);
  }
  spec.identities = 3;
  spec.occlusions.push_back({1, 40, 10});
  return spec;
}

SuiteReport verify_e2e(const RunConfig& config, const std::filesystem::path& workdir) {
  SuiteReport report{"e2e", true, {}};
  auto check = [&](const std::string& what, bool ok) {
    report.lines.push_back(std::string(ok ? "  pass " : "  FAIL ") + what);
    report.passed = report.passed && ok;
  };
  const std::uint64_t seed = config.seed();
  std::filesystem::create_directories(workdir);
  const auto train_seq = gen_synthetic_sequence(toy_training_spec(seed));
  const auto heldout = gen_synthetic_sequence(occlusion_spec(seed + 1000));
  write_sequence(train_seq, workdir / "train");
  write_sequence(heldout, workdir / "heldout");

  TrainOptions options;
  options.net = NetworkConfig::from_run_config(config);
  options.loss = LossConfig::from_run_config(config);
  options.train = TrainConfig::from_run_config(config);
  options.seed = seed;
  options.checkpoint_path = workdir / "model.uma";
  options.loss_csv_path = workdir / "loss.csv";
  const int limit = options.train.frame_limit > 0 ? options.train.frame_limit : 160;
  options.train.frame_limit = limit;
  const auto data = Dataset::load(workdir / "train", limit);
  const auto start = std::chrono::steady_clock::now();
  const auto trained = train(data, options);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.lines.push_back("  trained " + std::to_string(trained.log.size()) + " steps in " + fmt("%.1f s", secs));

  const auto full = Dataset::load(workdir / "train");
  const auto sep = affinity_separation(full, options.net, trained.params, options.train.search_scale, limit, 10, seed);
  check("held-out affinity gap " + fmt("%.3f", sep.gap()) + " (same " + fmt("%.3f", sep.same) + ", different " +
            fmt("%.3f", sep.different) + ")",
        sep.gap() >= 0.2);

  const auto tracker = TrackerConfig::from_run_config(config);
  const auto loaded = load_sequence(workdir / "heldout");
  const auto out = track_sequence(loaded, options.net, trained.params, tracker);
  write_results(out, workdir / "heldout_results.txt");
  const auto m = evaluate("heldout", loaded.gt, out, config.get_double("eval.iou_threshold"));
  check("occlusion sequence: MOTA " + fmt("%.3f", m.mota) + ", IDF1 " + fmt("%.3f", m.idf1) + ", IDS " +
            std::to_string(m.ids),
        m.mota >= 0.9 && m.idf1 >= 0.9 && m.ids == 0);
  return report;
}

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names = {"grad", "hungarian", "metrics", "e2e"};
  return names;
}

}  // namespace uma
