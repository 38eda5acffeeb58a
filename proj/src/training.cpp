#include "uma/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "uma/crop.hpp"
#include "uma/errors.hpp"
#include "uma/ops.hpp"

namespace uma {

TrainConfig TrainConfig::from_run_config(const RunConfig& config) {
  TrainConfig c;
  auto non_negative = [&](const char* key) {
    const long long v = config.get_int(key);
    if (v < 0) throw ParseError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.epochs = non_negative("train.epochs");
  c.steps_per_epoch = non_negative("train.steps_per_epoch");
  c.batch_size = non_negative("train.batch_size");
  c.lr_start = config.get_double("train.lr_start");
  c.lr_end = config.get_double("train.lr_end");
  c.momentum = config.get_double("train.momentum");
  c.max_frame_gap = static_cast<int>(config.get_int("train.max_frame_gap"));
  c.jitter = config.get_double("train.jitter");
  c.frame_limit = static_cast<int>(config.get_int("train.frame_limit"));
  c.search_scale = config.get_double("tracker.search_scale");
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ContractError("train.batch_size must be at least 2");
  if (!(lr_start > 0) || !(lr_end > 0)) throw ContractError("learning rates must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ContractError("train.momentum must be in [0, 1)");
  if (max_frame_gap < 0) throw ContractError("train.max_frame_gap must be non-negative");
  if (jitter < 0) throw ContractError("train.jitter must be non-negative");
  if (!(search_scale > 0)) throw ContractError("tracker.search_scale must be positive");
}

Dataset Dataset::from_sequences(std::vector<SequenceData> sequences, int frame_limit) {
  Dataset d;
  d.sequences = std::move(sequences);
  for (std::size_t s = 0; s < d.sequences.size(); ++s) {
    const auto& seq = d.sequences[s];
    std::vector<std::array<double, 3>> means;
    means.reserve(seq.frames.size());
    for (const auto& f : seq.frames) means.push_back(channel_mean(f));
    d.frame_means.push_back(std::move(means));

    std::map<long, std::vector<Observation>> by_id;
    for (const auto& row : seq.gt) {
      if (frame_limit > 0 && row.frame > frame_limit) continue;
      if (row.frame > static_cast<int>(seq.frames.size())) {
        throw ParseError(seq.meta.name + ": gt frame " + std::to_string(row.frame) + " beyond the sequence length");
      }
      by_id[row.id].push_back({s, row.frame, row.bbox});
    }
    for (auto& [id, obs] : by_id) {
      std::stable_sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) { return a.frame < b.frame; });
      d.identities.push_back(std::move(obs));
    }
  }
  return d;
}

Dataset Dataset::load(const std::filesystem::path& dir, int frame_limit) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("data directory not found: " + dir.string());
  std::vector<SequenceData> sequences;
  if (std::filesystem::exists(dir / "seqinfo.ini")) {
    sequences.push_back(load_sequence(dir));
  } else {
    std::vector<std::filesystem::path> subdirs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "seqinfo.ini")) subdirs.push_back(entry.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& p : subdirs) sequences.push_back(load_sequence(p));
  }
  if (sequences.empty()) throw ParseError("no sequences found under " + dir.string());
  for (const auto& s : sequences) {
    if (s.gt.empty()) throw ParseError(s.meta.name + ": training requires gt/gt.txt");
  }
  return from_sequences(std::move(sequences), frame_limit);
}

std::vector<TrainSample> sample_batch(const Dataset& data, std::size_t n, const NetworkConfig& net,
                                      const TrainConfig& config, std::mt19937_64& rng) {
  const std::size_t total = data.num_identities();
  if (total < n) {
    throw ContractError("sample_batch: need " + std::to_string(n) + " identities, dataset has " + std::to_string(total));
  }
  // Partial Fisher-Yates over identity labels.
  std::vector<std::size_t> labels(total);
  for (std::size_t i = 0; i < total; ++i) labels[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(labels[i], labels[pick(rng)]);
  }

  std::vector<TrainSample> batch;
  batch.reserve(n);
  std::uniform_real_distribution<double> jitter(-config.jitter, config.jitter);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& obs = data.identities[labels[i]];
    const Observation& anchor = obs[std::uniform_int_distribution<std::size_t>(0, obs.size() - 1)(rng)];
    std::vector<std::size_t> partners;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      if (obs[k].frame != anchor.frame && std::abs(obs[k].frame - anchor.frame) <= config.max_frame_gap) {
        partners.push_back(k);
      }
    }
    const Observation& positive =
        partners.empty() ? anchor : obs[partners[std::uniform_int_distribution<std::size_t>(0, partners.size() - 1)(rng)]];
    const double jx = jitter(rng), jy = jitter(rng);

    const auto z = crop_target(data.image(anchor), anchor.box, net.exemplar_size, net, config.search_scale,
                               data.fill(anchor));
    const double scale = crop_scale(net, config.search_scale, positive.box);
    const auto x = crop_target(data.image(positive), positive.box, net.instance_size_train, net, config.search_scale,
                               data.fill(positive), jx * scale, jy * scale);
    TrainSample s;
    s.exemplar = z.patch;
    s.instance = x.patch;
    s.label = labels[i];
    s.frame_gap = positive.frame - anchor.frame;
    s.offset_x = x.cx - 0.5 * static_cast<double>(net.instance_size_train);
    s.offset_y = x.cy - 0.5 * static_cast<double>(net.instance_size_train);
    s.target_w = x.w;
    s.target_h = x.h;
    batch.push_back(std::move(s));
  }
  return batch;
}

BatchLoss batch_loss(const std::vector<TrainSample>& batch, const NetworkConfig& net, const LossConfig& loss,
                     const NetworkParams& params) {
  std::vector<Tensor> sot_terms, w_z, w_x, logits_z, logits_x;
  std::vector<std::size_t> labels;
  const double half_x = 0.5 * static_cast<double>(net.instance_size_train);
  for (const auto& s : batch) {
    const Tensor f_z = backbone_forward(s.exemplar, net, params);
    const Tensor f_x = backbone_forward(s.instance, net, params);
    const Tensor v = sot_response(tsa_attention(f_x, Task::Sot, params), tsa_attention(f_z, Task::Sot, params), net,
                                  params)
                         .v;
    const Tensor y = make_label_map(v.dim(0), static_cast<double>(net.total_stride()), loss.label_radius, s.offset_x,
                                    s.offset_y);
    sot_terms.push_back(sot_loss(v, y));

    const Tensor z_aff = tsa_attention(f_z, Task::Aff, params);
    const Tensor x_aff = tsa_attention(f_x, Task::Aff, params);
    w_z.push_back(roi_embedding(z_aff, centered_roi(net, net.exemplar_size, s.target_w, s.target_h), net));
    w_x.push_back(roi_embedding(
        x_aff, patch_roi(net, half_x + s.offset_x, half_x + s.offset_y, s.target_w, s.target_h), net));
    logits_z.push_back(identity_logits(w_z.back(), params));
    logits_x.push_back(identity_logits(w_x.back(), params));
    labels.push_back(s.label);
  }
  const Tensor l_sot = mean(concat(sot_terms));
  const Tensor l_rank = loss.ranking == RankingLoss::NPair ? npair_loss(w_z, w_x) : triplet_loss(w_z, w_x, loss.margin);
  const Tensor l_iden = iden_loss(logits_z, logits_x, labels);
  BatchLoss out;
  out.l_sot = l_sot.item();
  out.l_rank = l_rank.item();
  out.l_iden = l_iden.item();
  out.total = total_loss(l_sot, l_rank, l_iden, loss);
  out.w_z = std::move(w_z);
  out.w_x = std::move(w_x);
  return out;
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  if (config.epochs <= 1) return config.lr_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, t);
}

void sgd_momentum_step(NetworkParams& params, OptimizerState& state, double lr) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter " + name);
    }
  }
  for (auto& [name, p] : params) {
    auto& v = state.velocity[name];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    auto data = p.data();
    const bool has = p.has_grad();
    const auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = state.momentum * v[i] - lr * (has ? g[i] : 0.0);
      data[i] += v[i];
    }
  }
}

namespace {

std::string shortest(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "epoch,step,L_sot,L_npair,L_iden,L_total\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + shortest(r.l_sot) + "," +
           shortest(r.l_rank) + "," + shortest(r.l_iden) + "," + shortest(r.l_total) + "\n";
  }
  return out;
}

TrainResult train(const Dataset& data, const TrainOptions& options) {
  return train(data, options, init_params(options.net, options.seed));
}

TrainResult train(const Dataset& data, const TrainOptions& options, NetworkParams initial) {
  options.net.validate();
  options.loss.validate();
  options.train.validate();
  check_params(options.net, initial);
  if (data.num_identities() > options.net.num_identities) {
    throw ContractError("dataset has " + std::to_string(data.num_identities()) +
                        " identities but network.num_identities is " + std::to_string(options.net.num_identities));
  }

  TrainResult result;
  result.params = std::move(initial);
  for (auto& [name, p] : result.params) p.set_requires_grad(true);
  OptimizerState state;
  state.momentum = options.train.momentum;
  std::mt19937_64 rng(options.seed ^ 0x5851f42d4c957f2dULL);

  auto save = [&] {
    if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, result.params);
    if (!options.loss_csv_path.empty()) write_text(options.loss_csv_path, loss_log_csv(result.log));
  };

  for (std::size_t epoch = 0; epoch < options.train.epochs; ++epoch) {
    const double lr = learning_rate(options.train, epoch);
    for (std::size_t step = 0; step < options.train.steps_per_epoch; ++step) {
      const std::string where = "epoch " + std::to_string(epoch + 1) + " step " + std::to_string(step + 1);
      const auto batch = sample_batch(data, options.train.batch_size, options.net, options.train, rng);
      for (auto& [name, p] : result.params) p.zero_grad();
      Tape tape;
      BatchLoss loss;
      try {
        TapeScope scope(tape);
        loss = batch_loss(batch, options.net, options.loss, result.params);
      } catch (const ContractError& e) {
        throw DivergenceError(where + ": " + e.what());
      }
      tape.backward(loss.total);
      try {
        sgd_momentum_step(result.params, state, lr);
      } catch (const DivergenceError& e) {
        throw DivergenceError(where + ": " + e.what());
      }
      LossRecord rec{epoch + 1, step + 1, loss.l_sot, loss.l_rank, loss.l_iden, loss.total.item()};
      result.log.push_back(rec);
      if (options.on_step) options.on_step(rec);
    }
    save();
  }
  if (options.train.epochs == 0) save();
  for (auto& [name, p] : result.params) p.drop_grad();
  return result;
}

Separation affinity_separation(const Dataset& data, const NetworkConfig& net, const NetworkParams& params,
                               double search_scale, int first_frame, std::size_t pairs_per_identity,
                               std::uint64_t seed) {
  std::vector<std::vector<const Observation*>> held_out;
  for (const auto& obs : data.identities) {
    std::vector<const Observation*> kept;
    for (const auto& o : obs) {
      if (o.frame > first_frame) kept.push_back(&o);
    }
    if (kept.size() >= 2) held_out.push_back(std::move(kept));
  }
  if (held_out.size() < 2) throw ContractError("affinity_separation: need two identities with held-out frames");

  std::map<const Observation*, Tensor> cache;
  auto embedding = [&](const Observation* o) -> const Tensor& {
    auto it = cache.find(o);
    if (it != cache.end()) return it->second;
    const auto crop = crop_target(data.image(*o), o->box, net.exemplar_size, net, search_scale, data.fill(*o));
    return cache.emplace(o, exemplar_features(crop, net, params).w).first->second;
  };

  std::mt19937_64 rng(seed);
  Separation sep;
  double same_sum = 0, diff_sum = 0;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const auto& obs = held_out[i];
    std::uniform_int_distribution<std::size_t> pick(0, obs.size() - 1);
    std::uniform_int_distribution<std::size_t> other(0, held_out.size() - 2);
    for (std::size_t k = 0; k < pairs_per_identity; ++k) {
      const std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      if (b == a) b = (a + 1) % obs.size();
      std::size_t j = other(rng);
      if (j >= i) ++j;
      const auto& obs_j = held_out[j];
      const Observation* c = obs_j[std::uniform_int_distribution<std::size_t>(0, obs_j.size() - 1)(rng)];
      const Tensor& wa = embedding(obs[a]);
      same_sum += affinity(wa, embedding(obs[b]));
      diff_sum += affinity(wa, embedding(c));
      ++sep.pairs;
    }
  }
  sep.same = same_sum / static_cast<double>(sep.pairs);
  sep.different = diff_sum / static_cast<double>(sep.pairs);
  return sep;
}

}  // namespace uma
