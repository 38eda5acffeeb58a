#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <vector>

#include "uma/association.hpp"
#include "uma/crop.hpp"
#include "uma/mot_io.hpp"
#include "uma/network.hpp"

namespace uma {

struct TrackerConfig {
  double alpha = 0.6;
  double beta = 0.5;
  double gamma = 0.5;
  int terminate_after = 30;
  std::size_t iou_window = 5;
  double search_scale = 4;
  std::size_t tracklet_samples = 5;
  /// A tentative track is confirmed after init_hits re-detections within the
  /// next init_window frames.
  int init_window = 3;
  int init_hits = 2;
  double min_confidence = 0;

  static TrackerConfig from_run_config(const RunConfig& config);
  void validate() const;
};

enum class TargetStatus { Tracked, Occluded };

struct TrackletEntry {
  int frame = 0;
  BBox box;
  Embedding embedding;
};

struct TargetState {
  long id = 0;
  TargetStatus status = TargetStatus::Tracked;
  Embedding w_z;
  Tensor z_sot;
  BBox box;
  std::vector<TrackletEntry> tracklet;
  int occluded_frames = 0;
  std::deque<double> iou_history;
};

struct SotResult {
  BBox box;
  ResponseMap response;
  /// AFF-attended search features and the target's position in them.
  Tensor x_aff;
  RoiBox roi;
};

/// Index of the maximum response; ties go to the cell closest to the map
/// centre, then to the lowest index.
std::size_t response_argmax(const Tensor& v);

/// Runs the SOT branch on a search region around the target's box.
SotResult sot_locate(const TargetState& target, const Image& frame, const std::array<double, 3>& fill,
                     const NetworkConfig& net, const NetworkParams& params, const TrackerConfig& config);

/// Affinity between the exemplar embedding and the ROI embedding at the SOT
/// box. -1 when the ROI does not overlap the feature grid.
double measure_affinity(const TargetState& target, const SotResult& sot, const NetworkConfig& net,
                        Embedding* instance_embedding = nullptr);

/// Occluded iff c < alpha or mean(iou_history) < beta; the IOU test is skipped
/// for an empty history.
TargetStatus detect_occlusion(double c, const std::deque<double>& iou_history, const TrackerConfig& config);

/// Greedy refinement of several tracks at once: pairs are taken in descending
/// IOU (ties by track then detection index), each track and detection at
/// most once. A track whose pair has IOU >= gamma becomes the coordinate-wise
/// mean of its box and the detection.
std::vector<BBox> refine_boxes(const std::vector<BBox>& tracks, const std::vector<BBox>& detections, double gamma);
BBox refine_bbox(const BBox& track, const std::vector<BBox>& detections, double gamma);

/// Indices of detections whose IOU with every tracked box is < gamma.
std::vector<std::size_t> candidate_detections(const std::vector<BBox>& detections, const std::vector<BBox>& tracked,
                                              double gamma);

/// Online multi-object tracker. Frames must be fed in strictly increasing order.
class Tracker {
 public:
  Tracker(NetworkConfig net, NetworkParams params, TrackerConfig config);

  /// Processes one frame and returns one row per Tracked target, sorted by id.
  std::vector<DetectionRow> step_frame(int frame, const Image& image, const std::vector<DetectionRow>& detections);

  const std::vector<TargetState>& targets() const { return targets_; }
  std::size_t tentative_count() const { return tentatives_.size(); }
  /// Number of association rounds that had at least one occluded tracklet.
  std::size_t association_rounds() const { return association_rounds_; }

 private:
  struct Candidate {
    BBox box;
    ExemplarFeatures features;
  };
  struct Tentative {
    int first_frame = 0;
    int hits = 0;
    BBox box;
    std::vector<TrackletEntry> history;
    ExemplarFeatures latest;
  };

  Candidate make_candidate(const Image& image, const std::array<double, 3>& fill, const BBox& box) const;
  void spawn(int frame, const Candidate& c, const std::vector<TrackletEntry>& history);
  void update_tentatives(int frame, const std::vector<Candidate>& births);
  void manage_trajectories(int frame, const Image& image);

  NetworkConfig net_;
  NetworkParams params_;
  TrackerConfig config_;
  std::vector<TargetState> targets_;
  std::vector<Tentative> tentatives_;
  long next_id_ = 1;
  int last_frame_ = 0;
  std::size_t association_rounds_ = 0;
};

struct TrackOptions {
  /// When set, annotated frames are written here as %06d.ppm.
  std::optional<std::filesystem::path> overlay_dir;
};

/// Runs the tracker over every frame of a sequence using its det rows.
TrackingOutput track_sequence(const SequenceData& seq, const NetworkConfig& net, const NetworkParams& params,
                              const TrackerConfig& config, const TrackOptions& options = {});

}  // namespace uma
