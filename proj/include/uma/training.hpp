#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "uma/losses.hpp"
#include "uma/mot_io.hpp"
#include "uma/network.hpp"

namespace uma {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 200;
  std::size_t batch_size = 8;
  double lr_start = 1e-2;
  double lr_end = 1e-4;
  double momentum = 0.9;
  int max_frame_gap = 50;
  /// Maximum crop-centre jitter of the instance patch, in patch pixels.
  double jitter = 8;
  /// When > 0, only gt rows with frame <= frame_limit are used.
  int frame_limit = 0;
  double search_scale = 4;

  static TrainConfig from_run_config(const RunConfig& config);
  void validate() const;
};

/// One observation of an identity.
struct Observation {
  std::size_t sequence = 0;
  int frame = 1;
  BBox box;
};

/// Identity-annotated sequences. Each (sequence, gt id) pair is one identity;
/// labels are assigned in (sequence, id) order.
struct Dataset {
  std::vector<SequenceData> sequences;
  std::vector<std::vector<Observation>> identities;  // by label, sorted by frame
  std::vector<std::vector<std::array<double, 3>>> frame_means;  // [sequence][frame - 1]

  static Dataset from_sequences(std::vector<SequenceData> sequences, int frame_limit = 0);
  /// `dir` is one sequence directory or a directory of sequence directories.
  static Dataset load(const std::filesystem::path& dir, int frame_limit = 0);

  std::size_t num_identities() const { return identities.size(); }
  const Image& image(const Observation& o) const { return sequences[o.sequence].frames[static_cast<std::size_t>(o.frame - 1)]; }
  const std::array<double, 3>& fill(const Observation& o) const {
    return frame_means[o.sequence][static_cast<std::size_t>(o.frame - 1)];
  }
};

struct TrainSample {
  Tensor exemplar;  // exemplar_size^2 x 3
  Tensor instance;  // instance_size_train^2 x 3
  std::size_t label = 0;
  int frame_gap = 0;
  /// Target centre offset from the instance patch centre, patch pixels.
  double offset_x = 0, offset_y = 0;
  /// Target size in patch pixels (same scale in both patches).
  double target_w = 0, target_h = 0;
};

/// N samples with pairwise-distinct identities. The positive is drawn
/// uniformly from observations within max_frame_gap of the exemplar (another
/// frame whenever one exists). Throws ContractError if fewer than N identities.
std::vector<TrainSample> sample_batch(const Dataset& data, std::size_t n, const NetworkConfig& net,
                                      const TrainConfig& config, std::mt19937_64& rng);

struct BatchLoss {
  Tensor total;
  double l_sot = 0, l_rank = 0, l_iden = 0;
  /// Exemplar and instance embeddings, in batch order.
  std::vector<Tensor> w_z, w_x;
};

/// Forward pass of the triplet network over a batch, recorded on the active tape.
BatchLoss batch_loss(const std::vector<TrainSample>& batch, const NetworkConfig& net, const LossConfig& loss,
                     const NetworkParams& params);

struct OptimizerState {
  double momentum = 0.9;
  std::map<std::string, std::vector<double>> velocity;
};

/// Geometric decay from lr_start at epoch 0 to lr_end at the last epoch.
double learning_rate(const TrainConfig& config, std::size_t epoch);

/// v <- mu v - lr g; p <- p + v for every parameter. A parameter without a
/// gradient buffer is treated as g = 0. Throws DivergenceError naming the
/// first parameter with a non-finite gradient; no parameter is modified then.
void sgd_momentum_step(NetworkParams& params, OptimizerState& state, double lr);

struct LossRecord {
  std::size_t epoch = 0, step = 0;
  double l_sot = 0, l_rank = 0, l_iden = 0, l_total = 0;
};

struct TrainOptions {
  NetworkConfig net;
  LossConfig loss;
  TrainConfig train;
  std::uint64_t seed = 1;
  /// Written after every epoch when non-empty.
  std::filesystem::path checkpoint_path;
  /// Loss log CSV, rewritten after every epoch when non-empty.
  std::filesystem::path loss_csv_path;
  std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
  NetworkParams params;
  std::vector<LossRecord> log;
};

/// Initialises parameters from the seed and trains. Throws DivergenceError
/// with epoch and step when a loss or gradient becomes non-finite.
TrainResult train(const Dataset& data, const TrainOptions& options);
TrainResult train(const Dataset& data, const TrainOptions& options, NetworkParams initial);

std::string loss_log_csv(const std::vector<LossRecord>& log);

/// Mean same-identity minus mean different-identity affinity between exemplar
/// embeddings taken at different frames, restricted to frames > first_frame.
struct Separation {
  double same = 0, different = 0;
  std::size_t pairs = 0;
  double gap() const { return same - different; }
};
Separation affinity_separation(const Dataset& data, const NetworkConfig& net, const NetworkParams& params,
                               double search_scale, int first_frame, std::size_t pairs_per_identity,
                               std::uint64_t seed);

}  // namespace uma
