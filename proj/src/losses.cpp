#include "uma/losses.hpp"

#include <cmath>

#include "uma/errors.hpp"
#include "uma/ops.hpp"

namespace uma {

LossConfig LossConfig::from_run_config(const RunConfig& config) {
  LossConfig c;
  c.lambda1 = config.get_double("loss.lambda1");
  c.lambda2 = config.get_double("loss.lambda2");
  c.margin = config.get_double("loss.margin");
  c.label_radius = config.get_double("loss.label_radius");
  const std::string& ranking = config.get("loss.ranking");
  if (ranking == "npair") {
    c.ranking = RankingLoss::NPair;
  } else if (ranking == "triplet") {
    c.ranking = RankingLoss::Triplet;
  } else {
    throw ParseError("loss.ranking must be npair or triplet, got '" + ranking + "'");
  }
  c.validate();
  return c;
}

void LossConfig::validate() const {
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ContractError("loss weights must be non-negative");
  if (!(margin > 0)) throw ContractError("triplet margin must be positive");
  if (!(label_radius > 0)) throw ContractError("label radius must be positive");
}

Tensor make_label_map(std::size_t map_side, double stride, double radius, double offset_x, double offset_y) {
  if (!(radius > 0)) throw ContractError("make_label_map: radius must be positive");
  Tensor y(Shape{map_side, map_side});
  const double centre = 0.5 * static_cast<double>(map_side - 1);
  for (std::size_t i = 0; i < map_side; ++i) {
    for (std::size_t j = 0; j < map_side; ++j) {
      const double dy = (static_cast<double>(i) - centre) * stride - offset_y;
      const double dx = (static_cast<double>(j) - centre) * stride - offset_x;
      y[i * map_side + j] = std::hypot(dx, dy) <= radius ? 1.0 : -1.0;
    }
  }
  return y;
}

Tensor sot_loss(const Tensor& v, const Tensor& labels) {
  if (v.shape() != labels.shape()) {
    throw DimensionError("sot_loss: response " + shape_string(v.shape()) + " vs labels " +
                         shape_string(labels.shape()));
  }
  return mean(softplus(scale(mul(v, labels), -1.0)));
}

namespace {

void check_batch(const std::vector<Tensor>& w_z, const std::vector<Tensor>& w_x, const char* op) {
  if (w_z.size() != w_x.size()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(w_z.size()) + " anchors vs " +
                         std::to_string(w_x.size()) + " positives");
  }
  if (w_z.size() < 2) throw ContractError(std::string(op) + ": batch needs at least 2 pairs");
}

}  // namespace

Tensor triplet_loss(const std::vector<Tensor>& w_z, const std::vector<Tensor>& w_x, double margin) {
  check_batch(w_z, w_x, "triplet_loss");
  const std::size_t n = w_z.size();
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor d_pos = sub(w_z[i], w_x[i]);
    Tensor pos = dot(d_pos, d_pos);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Tensor d_neg = sub(w_z[i], w_x[j]);
      terms.push_back(relu(add_scalar(sub(pos, dot(d_neg, d_neg)), margin)));
    }
  }
  return scale(sum(concat(terms)), 1.0 / static_cast<double>(n));
}

Tensor npair_loss(const std::vector<Tensor>& w_z, const std::vector<Tensor>& w_x) {
  check_batch(w_z, w_x, "npair_loss");
  const std::size_t n = w_z.size();
  std::vector<Tensor> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor positive = dot(w_z[i], w_x[i]);
    // log(1 + sum_j e^{t_j}) = logsumexp([0, t_1, ...]).
    std::vector<Tensor> logits{Tensor::scalar(0.0)};
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) logits.push_back(sub(dot(w_z[i], w_x[j]), positive));
    }
    rows.push_back(logsumexp(concat(logits)));
  }
  return mean(concat(rows));
}

Tensor iden_loss(const std::vector<Tensor>& logits_z, const std::vector<Tensor>& logits_x,
                 const std::vector<std::size_t>& labels) {
  if (logits_z.size() != labels.size() || logits_x.size() != labels.size() || labels.empty()) {
    throw DimensionError("iden_loss: logits and labels disagree in batch size");
  }
  const std::size_t n = labels.size();
  std::vector<Tensor> z_terms, x_terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= logits_z[i].size() || labels[i] >= logits_x[i].size()) {
      throw ContractError("iden_loss: label " + std::to_string(labels[i]) + " out of range for " +
                          std::to_string(logits_z[i].size()) + " classes");
    }
    z_terms.push_back(select(log_softmax(logits_z[i]), labels[i]));
    x_terms.push_back(select(log_softmax(logits_x[i]), labels[i]));
  }
  return scale(add(mean(concat(z_terms)), mean(concat(x_terms))), -1.0);
}

Tensor total_loss(const Tensor& l_sot, const Tensor& l_rank, const Tensor& l_iden, const LossConfig& config) {
  const std::pair<const char*, const Tensor*> parts[] = {{"L_sot", &l_sot}, {"L_rank", &l_rank}, {"L_iden", &l_iden}};
  for (const auto& [name, t] : parts) {
    if (!std::isfinite(t->item())) throw ContractError(std::string("total_loss: non-finite component ") + name);
  }
  return add(l_sot, add(scale(l_rank, config.lambda1), scale(l_iden, config.lambda2)));
}

}  // namespace uma
