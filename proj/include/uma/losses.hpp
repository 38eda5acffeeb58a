#pragma once

#include <cstddef>
#include <vector>

#include "uma/config.hpp"
#include "uma/tensor.hpp"

namespace uma {

enum class RankingLoss { NPair, Triplet };

struct LossConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double margin = 0.5;
  /// Positive-label radius in patch pixels.
  double label_radius = 4.0;
  RankingLoss ranking = RankingLoss::NPair;

  static LossConfig from_run_config(const RunConfig& config);
  void validate() const;
};

/// map_side x map_side labels: +1 where the cell's pixel distance from the
/// target centre is <= radius, -1 elsewhere. The target centre is the map
/// centre shifted by (offset_x, offset_y) pixels.
Tensor make_label_map(std::size_t map_side, double stride, double radius, double offset_x = 0.0,
                      double offset_y = 0.0);

/// Mean over positions of log(1 + exp(-v_p y_p)).
Tensor sot_loss(const Tensor& v, const Tensor& labels);

/// Batch-all triplet loss: negatives of anchor i are the positives of every j != i.
/// (1/N) sum_i sum_{j != i} max(0, |z_i - x_i|^2 - |z_i - x_j|^2 + margin).
Tensor triplet_loss(const std::vector<Tensor>& w_z, const std::vector<Tensor>& w_x, double margin);

/// (1/N) sum_i log(1 + sum_{j != i} exp(z_i.x_j - z_i.x_i)), log-sum-exp stabilised.
Tensor npair_loss(const std::vector<Tensor>& w_z, const std::vector<Tensor>& w_x);

/// Cross-entropy of both branches against the true identity:
/// -(mean_i log p(z_i) + mean_i log p(x_i)).
Tensor iden_loss(const std::vector<Tensor>& logits_z, const std::vector<Tensor>& logits_x,
                 const std::vector<std::size_t>& labels);

/// L_sot + (lambda1 L_rank + lambda2 L_iden). Throws ContractError naming any
/// non-finite component.
Tensor total_loss(const Tensor& l_sot, const Tensor& l_rank, const Tensor& l_iden, const LossConfig& config);

}  // namespace uma
