#include "uma/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <tuple>

#include "uma/errors.hpp"

namespace uma {

TrackerConfig TrackerConfig::from_run_config(const RunConfig& config) {
  TrackerConfig c;
  c.alpha = config.get_double("tracker.alpha");
  c.beta = config.get_double("tracker.beta");
  c.gamma = config.get_double("tracker.gamma");
  c.terminate_after = static_cast<int>(config.get_int("tracker.terminate_after"));
  c.iou_window = static_cast<std::size_t>(std::max(0LL, config.get_int("tracker.iou_window")));
  c.search_scale = config.get_double("tracker.search_scale");
  c.tracklet_samples = static_cast<std::size_t>(std::max(0LL, config.get_int("tracker.tracklet_samples")));
  c.init_window = static_cast<int>(config.get_int("tracker.init_window"));
  c.init_hits = static_cast<int>(config.get_int("tracker.init_hits"));
  c.min_confidence = config.get_double("tracker.min_confidence");
  c.validate();
  return c;
}

void TrackerConfig::validate() const {
  // alpha may be -1 (occlusion test off) or +inf (every target occluded).
  if (std::isnan(alpha)) throw ContractError("tracker.alpha must be a number");
  if (!(beta >= 0 && beta <= 1)) throw ContractError("tracker.beta must be in [0, 1]");
  if (!(gamma >= 0 && gamma <= 1)) throw ContractError("tracker.gamma must be in [0, 1]");
  if (terminate_after < 1) throw ContractError("tracker.terminate_after must be >= 1");
  if (iou_window < 1) throw ContractError("tracker.iou_window must be >= 1");
  if (!(search_scale > 0)) throw ContractError("tracker.search_scale must be positive");
  if (tracklet_samples < 1) throw ContractError("tracker.tracklet_samples must be >= 1");
  if (init_window < 1 || init_hits < 1 || init_hits > init_window) {
    throw ContractError("tracker.init_hits must be in [1, tracker.init_window]");
  }
}

std::size_t response_argmax(const Tensor& v) {
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  const double cr = 0.5 * static_cast<double>(rows - 1), cc = 0.5 * static_cast<double>(cols - 1);
  std::size_t best = 0;
  double best_value = v[0];
  double best_dist = std::hypot(0 - cr, 0 - cc);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = i * cols + j;
      const double d = std::hypot(static_cast<double>(i) - cr, static_cast<double>(j) - cc);
      if (v[k] > best_value || (v[k] == best_value && d < best_dist)) {
        best = k;
        best_value = v[k];
        best_dist = d;
      }
    }
  }
  return best;
}

SotResult sot_locate(const TargetState& target, const Image& frame, const std::array<double, 3>& fill,
                     const NetworkConfig& net, const NetworkParams& params, const TrackerConfig& config) {
  if (target.status != TargetStatus::Tracked) throw ContractError("sot_locate: target is not tracked");
  const std::size_t side = net.track_instance_size();
  const auto crop = crop_target(frame, target.box, side, net, config.search_scale, fill);
  const Tensor f_x = backbone_forward(crop.patch, net, params);
  SotResult out;
  out.response = sot_response(tsa_attention(f_x, Task::Sot, params), target.z_sot, net, params);
  const Tensor& v = out.response.v;
  const std::size_t k = response_argmax(v);
  const double rows = static_cast<double>(v.dim(0)), cols = static_cast<double>(v.dim(1));
  const double stride = static_cast<double>(net.total_stride());
  const double dx = (static_cast<double>(k % v.dim(1)) - 0.5 * (cols - 1)) * stride;
  const double dy = (static_cast<double>(k / v.dim(1)) - 0.5 * (rows - 1)) * stride;
  out.box = BBox::from_center(target.box.cx() + dx * crop.scale, target.box.cy() + dy * crop.scale, target.box.w,
                              target.box.h);
  out.x_aff = tsa_attention(f_x, Task::Aff, params);
  out.roi = patch_roi(net, crop.cx + dx, crop.cy + dy, crop.w, crop.h);
  return out;
}

double measure_affinity(const TargetState& target, const SotResult& sot, const NetworkConfig& net,
                        Embedding* instance_embedding) {
  if (!roi_intersects(sot.roi, sot.x_aff.dim(0), sot.x_aff.dim(1))) return -1.0;
  const Tensor w_x = roi_embedding(sot.x_aff, sot.roi, net);
  if (instance_embedding) instance_embedding->assign(w_x.data().begin(), w_x.data().end());
  if (w_x.size() != target.w_z.size()) throw DimensionError("measure_affinity: embedding size mismatch");
  double c = 0;
  for (std::size_t i = 0; i < w_x.size(); ++i) c += w_x[i] * target.w_z[i];
  return c;
}

TargetStatus detect_occlusion(double c, const std::deque<double>& iou_history, const TrackerConfig& config) {
  if (c < config.alpha) return TargetStatus::Occluded;
  if (!iou_history.empty()) {
    const double mean_iou =
        std::accumulate(iou_history.begin(), iou_history.end(), 0.0) / static_cast<double>(iou_history.size());
    if (mean_iou < config.beta) return TargetStatus::Occluded;
  }
  return TargetStatus::Tracked;
}

namespace {

/// Greedy one-to-one pairing by descending IOU, keeping pairs with IOU >= gamma.
std::vector<long> greedy_pairs(const std::vector<BBox>& a, const std::vector<BBox>& b, double gamma) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double o = iou(a[i], b[j]);
      if (o >= gamma && o > 0) pairs.emplace_back(o, i, j);
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
    return std::get<2>(x) < std::get<2>(y);
  });
  std::vector<long> a_to_b(a.size(), -1);
  std::vector<char> b_used(b.size(), 0);
  for (const auto& [o, i, j] : pairs) {
    if (a_to_b[i] >= 0 || b_used[j]) continue;
    a_to_b[i] = static_cast<long>(j);
    b_used[j] = 1;
  }
  return a_to_b;
}

BBox mean_box(const BBox& a, const BBox& b) {
  return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y), 0.5 * (a.w + b.w), 0.5 * (a.h + b.h)};
}

std::array<std::uint8_t, 3> id_color(long id) {
  const auto u = static_cast<std::uint64_t>(id) * 0x9e3779b97f4a7c15ULL;
  return {static_cast<std::uint8_t>(64 + (u >> 56) % 192), static_cast<std::uint8_t>(64 + (u >> 40) % 192),
          static_cast<std::uint8_t>(64 + (u >> 24) % 192)};
}

Embedding to_embedding(const Tensor& t) { return Embedding(t.data().begin(), t.data().end()); }

}  // namespace

std::vector<BBox> refine_boxes(const std::vector<BBox>& tracks, const std::vector<BBox>& detections, double gamma) {
  const auto match = greedy_pairs(tracks, detections, gamma);
  std::vector<BBox> out = tracks;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (match[i] >= 0) out[i] = mean_box(tracks[i], detections[static_cast<std::size_t>(match[i])]);
  }
  return out;
}

BBox refine_bbox(const BBox& track, const std::vector<BBox>& detections, double gamma) {
  return refine_boxes({track}, detections, gamma)[0];
}

std::vector<std::size_t> candidate_detections(const std::vector<BBox>& detections, const std::vector<BBox>& tracked,
                                              double gamma) {
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const bool covered = std::any_of(tracked.begin(), tracked.end(),
                                     [&](const BBox& t) { return !(iou(detections[d], t) < gamma); });
    if (!covered) out.push_back(d);
  }
  return out;
}

Tracker::Tracker(NetworkConfig net, NetworkParams params, TrackerConfig config)
    : net_(std::move(net)), params_(std::move(params)), config_(config) {
  net_.validate();
  config_.validate();
  check_params(net_, params_);
}

Tracker::Candidate Tracker::make_candidate(const Image& image, const std::array<double, 3>& fill,
                                           const BBox& box) const {
  const auto crop = crop_target(image, box, net_.exemplar_size, net_, config_.search_scale, fill);
  return {box, exemplar_features(crop, net_, params_)};
}

void Tracker::spawn(int frame, const Candidate& c, const std::vector<TrackletEntry>& history) {
  TargetState t;
  t.id = next_id_++;
  t.status = TargetStatus::Tracked;
  t.w_z = to_embedding(c.features.w);
  t.z_sot = c.features.z_sot;
  t.box = c.box;
  t.tracklet = history;
  if (t.tracklet.empty() || t.tracklet.back().frame != frame) t.tracklet.push_back({frame, c.box, t.w_z});
  targets_.push_back(std::move(t));
}

void Tracker::update_tentatives(int frame, const std::vector<Candidate>& births) {
  std::vector<BBox> tentative_boxes, birth_boxes;
  for (const auto& t : tentatives_) tentative_boxes.push_back(t.box);
  for (const auto& b : births) birth_boxes.push_back(b.box);
  const auto match = greedy_pairs(tentative_boxes, birth_boxes, config_.gamma);

  std::vector<char> birth_used(births.size(), 0);
  std::vector<Tentative> kept;
  for (std::size_t k = 0; k < tentatives_.size(); ++k) {
    Tentative& t = tentatives_[k];
    if (match[k] >= 0) {
      const auto& b = births[static_cast<std::size_t>(match[k])];
      birth_used[static_cast<std::size_t>(match[k])] = 1;
      ++t.hits;
      t.box = b.box;
      t.latest = b.features;
      t.history.push_back({frame, b.box, to_embedding(b.features.w)});
      if (t.hits >= config_.init_hits) {
        spawn(frame, {t.box, t.latest}, t.history);
        continue;
      }
    }
    if (frame - t.first_frame >= config_.init_window) continue;
    kept.push_back(std::move(t));
  }
  for (std::size_t b = 0; b < births.size(); ++b) {
    if (birth_used[b]) continue;
    Tentative t;
    t.first_frame = frame;
    t.box = births[b].box;
    t.latest = births[b].features;
    t.history.push_back({frame, births[b].box, to_embedding(births[b].features.w)});
    kept.push_back(std::move(t));
  }
  tentatives_ = std::move(kept);
}

void Tracker::manage_trajectories(int /*frame*/, const Image& image) {
  const BBox view{0, 0, static_cast<double>(image.width), static_cast<double>(image.height)};
  std::vector<TargetState> alive;
  for (auto& t : targets_) {
    if (t.status == TargetStatus::Occluded) {
      ++t.occluded_frames;
      if (t.occluded_frames > config_.terminate_after) continue;
    } else {
      t.occluded_frames = 0;
      if (intersection_area(t.box, view) <= 0) continue;
    }
    alive.push_back(std::move(t));
  }
  targets_ = std::move(alive);
}

std::vector<DetectionRow> Tracker::step_frame(int frame, const Image& image,
                                              const std::vector<DetectionRow>& detections) {
  if (frame <= last_frame_) {
    throw ContractError("step_frame: frame " + std::to_string(frame) + " after frame " + std::to_string(last_frame_));
  }
  const bool first = last_frame_ == 0;
  last_frame_ = frame;

  std::vector<BBox> dets;
  for (const auto& d : detections) {
    if (d.confidence >= config_.min_confidence) dets.push_back(d.bbox);
  }
  const auto fill = channel_mean(image);

  // SOT, affinity and occlusion test for every tracked target.
  std::vector<std::size_t> tracked;
  std::vector<Embedding> measured;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    TargetState& t = targets_[i];
    if (t.status != TargetStatus::Tracked) continue;
    const auto sot = sot_locate(t, image, fill, net_, params_, config_);
    Embedding w_x;
    const double c = measure_affinity(t, sot, net_, &w_x);
    double best_iou = 0;
    for (const auto& d : dets) best_iou = std::max(best_iou, iou(sot.box, d));
    t.iou_history.push_back(best_iou);
    while (t.iou_history.size() > config_.iou_window) t.iou_history.pop_front();
    if (detect_occlusion(c, t.iou_history, config_) == TargetStatus::Occluded) {
      t.status = TargetStatus::Occluded;
      t.occluded_frames = 0;
      continue;
    }
    t.box = sot.box;
    tracked.push_back(i);
    measured.push_back(w_x.empty() ? t.w_z : std::move(w_x));
  }

  std::vector<BBox> tracked_boxes;
  for (auto i : tracked) tracked_boxes.push_back(targets_[i].box);
  tracked_boxes = refine_boxes(tracked_boxes, dets, config_.gamma);
  for (std::size_t k = 0; k < tracked.size(); ++k) {
    TargetState& t = targets_[tracked[k]];
    t.box = tracked_boxes[k];
    t.tracklet.push_back({frame, t.box, measured[k]});
  }

  std::vector<Candidate> candidates;
  for (auto d : candidate_detections(dets, tracked_boxes, config_.gamma)) {
    candidates.push_back(make_candidate(image, fill, dets[d]));
  }

  if (first) {
    for (const auto& c : candidates) spawn(frame, c, {});
  } else {
    std::vector<std::size_t> occluded;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      if (targets_[i].status == TargetStatus::Occluded) occluded.push_back(i);
    }
    std::vector<Candidate> births;
    if (!occluded.empty() && !candidates.empty()) {
      ++association_rounds_;
      std::vector<Embedding> cand_emb;
      for (const auto& c : candidates) cand_emb.push_back(to_embedding(c.features.w));
      std::vector<std::vector<Embedding>> tracklets;
      for (auto i : occluded) {
        std::vector<Embedding> e;
        for (const auto& entry : targets_[i].tracklet) e.push_back(entry.embedding);
        tracklets.push_back(std::move(e));
      }
      const auto result = associate(cand_emb, tracklets, config_.alpha, config_.tracklet_samples);
      for (const auto& [d, k] : result.recovered) {
        TargetState& t = targets_[occluded[k]];
        t.status = TargetStatus::Tracked;
        t.box = candidates[d].box;
        t.occluded_frames = 0;
        t.iou_history.clear();
        t.tracklet.push_back({frame, t.box, cand_emb[d]});
      }
      for (auto d : result.births) births.push_back(candidates[d]);
    } else {
      births = candidates;
    }
    update_tentatives(frame, births);
  }

  manage_trajectories(frame, image);

  std::vector<DetectionRow> rows;
  for (const auto& t : targets_) {
    if (t.status != TargetStatus::Tracked) continue;
    DetectionRow r;
    r.frame = frame;
    r.id = t.id;
    r.bbox = t.box;
    r.confidence = 1.0;
    rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(), [](const DetectionRow& a, const DetectionRow& b) { return a.id < b.id; });
  return rows;
}

TrackingOutput track_sequence(const SequenceData& seq, const NetworkConfig& net, const NetworkParams& params,
                              const TrackerConfig& config, const TrackOptions& options) {
  std::map<int, std::vector<DetectionRow>> by_frame;
  for (const auto& d : seq.det) by_frame[d.frame].push_back(d);
  if (options.overlay_dir) std::filesystem::create_directories(*options.overlay_dir);

  Tracker tracker(net, params, config);
  TrackingOutput out;
  static const std::vector<DetectionRow> kNone;
  for (int f = 1; f <= static_cast<int>(seq.frames.size()); ++f) {
    const auto it = by_frame.find(f);
    const auto& image = seq.frames[static_cast<std::size_t>(f - 1)];
    auto rows = tracker.step_frame(f, image, it == by_frame.end() ? kNone : it->second);
    if (options.overlay_dir) {
      Image canvas = image;
      for (const auto& r : rows) draw_box(canvas, r.bbox, id_color(r.id), r.id);
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.ppm", f);
      write_ppm(*options.overlay_dir / name, canvas);
    }
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

}  // namespace uma
