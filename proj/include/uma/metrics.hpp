#pragma once

#include <string>
#include <vector>

#include "uma/mot_io.hpp"

namespace uma {

/// CLEAR MOT, identity and trajectory-coverage metrics. Ratios are fractions
/// (MOTA 0.6, not 60); MT and ML are percentages of gt trajectories.
struct MetricsReport {
  std::string sequence;
  double mota = 0, motp = 0, idf1 = 0, mt = 0, ml = 0;
  long fp = 0, fn = 0, ids = 0;

  // Raw counts, kept so reports can be aggregated exactly.
  long num_gt = 0;
  long num_hyp = 0;
  long matches = 0;
  double iou_sum = 0;
  long idtp = 0;
  long gt_tracks = 0;
  long mostly_tracked = 0;
  long mostly_lost = 0;
};

struct ClearMotResult {
  long num_gt = 0, num_hyp = 0, fp = 0, fn = 0, ids = 0, matches = 0;
  double iou_sum = 0;
  double mota = 0, motp = 0;
  long gt_tracks = 0, mostly_tracked = 0, mostly_lost = 0;
};

/// Per-frame matching with carry-over of each gt's last matched hypothesis,
/// then a maximum-cardinality, maximum-IOU assignment of the rest. Throws
/// ContractError on duplicate (frame, id) rows, ids < 1 or an empty gt.
ClearMotResult clear_mot(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp,
                         double iou_threshold = 0.5);

/// 2 IDTP / (num_gt + num_hyp) under one global gt-id to hyp-id assignment.
double idf1(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp, double iou_threshold = 0.5);
long idtp_count(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp, double iou_threshold);

struct TrackCoverage {
  double mt = 0, ml = 0;  // percentages
};
TrackCoverage mt_ml(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp,
                    double iou_threshold = 0.5);

MetricsReport evaluate(const std::string& sequence, const std::vector<DetectionRow>& gt,
                       const std::vector<DetectionRow>& hyp, double iou_threshold = 0.5);

/// Sums the raw counts and recomputes every ratio.
MetricsReport aggregate(const std::vector<MetricsReport>& reports, const std::string& name = "OVERALL");

std::string report_csv(const std::vector<MetricsReport>& reports);
std::string report_table(const std::vector<MetricsReport>& reports);

}  // namespace uma
