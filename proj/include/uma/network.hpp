#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uma/checkpoint.hpp"
#include "uma/config.hpp"
#include "uma/ops.hpp"
#include "uma/tensor.hpp"

namespace uma {

struct LayerSpec {
  enum class Kind { Conv, Pool };
  Kind kind = Kind::Conv;
  std::size_t channels = 0;  // conv only
  std::size_t kernel = 0;    // conv kernel or pool window
  std::size_t stride = 1;
};

/// Parses "conv:16:3:1,pool:2:2,...". Throws ParseError.
std::vector<LayerSpec> parse_backbone(const std::string& text);
std::string format_backbone(const std::vector<LayerSpec>& layers);

struct NetworkConfig {
  std::vector<LayerSpec> backbone;
  std::size_t exemplar_size = 22;
  std::size_t instance_size_train = 38;
  /// 0 means "derive from the backbone", see track_instance_size().
  std::size_t instance_size_track = 0;
  std::size_t tsa_reduction = 4;
  std::size_t num_identities = 20;
  std::size_t identity_hidden = 512;
  double response_scale = 1e-3;
  std::size_t roi_side = 6;

  /// 3 conv layers (16/32/32 channels, kernel 3) with one 2x2 max-pool.
  static NetworkConfig toy();
  /// AlexNet-style five-conv backbone: 127 -> 6x6x256, 239 -> 20x20x256.
  static NetworkConfig full_scale();
  static NetworkConfig from_run_config(const RunConfig& config);

  /// Throws ContractError on an inconsistent configuration.
  void validate() const;

  std::size_t embed_dim() const;
  /// Side of the backbone output for a square patch; throws DimensionError
  /// when the patch is too small for some layer.
  std::size_t feature_side(std::size_t patch_side) const;
  /// Product of all layer strides.
  std::size_t total_stride() const;
  /// Patch coordinate (continuous, pixel i spans [i, i+1)) of the centre of
  /// feature cell 0.
  double feature_origin() const;
  /// Search patch side used while tracking: the configured value, or the
  /// smallest side whose feature side is the exemplar feature side + 16.
  std::size_t track_instance_size() const;

  double feature_to_patch(double cell) const { return feature_origin() + total_stride() * cell; }
  double patch_to_feature(double u) const { return (u - feature_origin()) / total_stride(); }
};

/// Learnable weights keyed by layer name.
using NetworkParams = NamedTensors;

/// He-initialised parameters, all marked as requiring gradients.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

/// Throws ContractError listing every missing, unexpected or mis-shaped tensor.
void check_params(const NetworkConfig& config, const NetworkParams& params);

/// Expected name -> shape map for a configuration.
std::map<std::string, Shape> param_shapes(const NetworkConfig& config);

enum class Task { Sot, Aff };

struct ResponseMap {
  Tensor v;
  /// Patch pixels between neighbouring response cells.
  double stride = 1.0;
};

/// Shared feature extractor. patch is S x S x 3 with S a configured patch size.
Tensor backbone_forward(const Tensor& patch, const NetworkConfig& config, const NetworkParams& params);

/// v = f_x * f_z + b: the exemplar feature slides over the instance feature
/// as one kernel summing over all channels.
ResponseMap cross_correlation(const Tensor& f_x, const Tensor& f_z, const Tensor& bias, double stride = 1.0);

/// SOT head: correlation of attended features, scaled by response_scale, plus the learnt bias.
ResponseMap sot_response(const Tensor& f_x_sot, const Tensor& f_z_sot, const NetworkConfig& config,
                         const NetworkParams& params);

/// Channel gates a = sigmoid(W2 relu(W1 GAP(f))) for one task.
Tensor tsa_gates(const Tensor& f, Task task, const NetworkParams& params);
/// Re-weights the channels of f by the task's gates.
Tensor tsa_attention(const Tensor& f, Task task, const NetworkParams& params);

/// GAP followed by L2 normalisation. Throws ContractError on an all-zero pool.
Tensor embed(const Tensor& f_aligned);

/// Pre-softmax identity scores from an embedding.
Tensor identity_logits(const Tensor& w, const NetworkParams& params);

/// Inner product of two unit embeddings.
double affinity(const Tensor& w_a, const Tensor& w_b);

/// Feature-map box of a target of size (w, h) centred at (cx, cy), all in patch pixels.
RoiBox patch_roi(const NetworkConfig& config, double cx, double cy, double w, double h);

/// patch_roi for a target centred in a square patch of side `patch_side`.
RoiBox centered_roi(const NetworkConfig& config, std::size_t patch_side, double target_w, double target_h);

/// Unit embedding of the target inside an AFF-attended feature map:
/// ROI-Align to roi_side x roi_side, then GAP and L2 normalisation.
Tensor roi_embedding(const Tensor& f_aff, const RoiBox& roi, const NetworkConfig& config);

}  // namespace uma
