#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "uma/errors.hpp"
#include "uma/synthetic.hpp"
#include "uma/tracker.hpp"

using namespace uma;

namespace {

SequenceData two_target_sequence(int frames) {
  SyntheticSpec spec;
  spec.width = 200;
  spec.height = 150;
  spec.frames = frames;
  SyntheticTarget a, b;
  a.id = 1;
  a.cx = 50;
  a.cy = 60;
  a.vx = 0.8;
  b.id = 2;
  b.cx = 150;
  b.cy = 90;
  b.vy = -0.5;
  b.color = {60, 200, 60};
  b.texture_seed = 2;
  spec.targets = {a, b};
  spec.identities = 2;
  return gen_synthetic_sequence(spec);
}

std::vector<DetectionRow> dets_at(const SequenceData& seq, int frame) {
  std::vector<DetectionRow> out;
  for (const auto& d : seq.det)
    if (d.frame == frame) out.push_back(d);
  return out;
}

// Occlusion test disabled: affinity is always >= -1 and mean IOU >= 0.
TrackerConfig always_tracked() {
  TrackerConfig c;
  c.alpha = -1;
  c.beta = 0;
  return c;
}

const NetworkParams& toy_params() {
  static const NetworkParams p = init_params(NetworkConfig::toy(), 3);
  return p;
}

}  // namespace

TEST(OcclusionTest, Cases) {
  TrackerConfig c;
  EXPECT_EQ(detect_occlusion(0.9, {0.8}, c), TargetStatus::Tracked);
  EXPECT_EQ(detect_occlusion(0.3, {0.8}, c), TargetStatus::Occluded);
  EXPECT_EQ(detect_occlusion(0.9, {0.2}, c), TargetStatus::Occluded);
  EXPECT_EQ(detect_occlusion(0.9, {}, c), TargetStatus::Tracked);
  EXPECT_EQ(detect_occlusion(0.6, {0.5}, c), TargetStatus::Tracked);
  EXPECT_EQ(detect_occlusion(0.9, {0.9, 0.0}, c), TargetStatus::Occluded);
}

TEST(Refine, MeanOfTrackAndDetection) {
  EXPECT_EQ(refine_bbox({0, 0, 10, 10}, {{2, 0, 10, 10}}, 0.5), (BBox{1, 0, 10, 10}));
  EXPECT_EQ(refine_bbox({0, 0, 10, 10}, {{8, 0, 10, 10}}, 0.5), (BBox{0, 0, 10, 10}));
  EXPECT_EQ(refine_bbox({0, 0, 10, 10}, {}, 0.5), (BBox{0, 0, 10, 10}));
  // Two tracks competing for one detection: the higher IOU wins.
  const auto r = refine_boxes({{0, 0, 10, 10}, {1, 0, 10, 10}}, {{1, 0, 10, 10}}, 0.5);
  EXPECT_EQ(r[0], (BBox{0, 0, 10, 10}));
  EXPECT_EQ(r[1], (BBox{1, 0, 10, 10}));
}

TEST(Candidates, ExactlyGammaIsCovered) {
  // IOU of {0,0,10,10} and {0,0,10,5} is exactly 0.5.
  EXPECT_TRUE(candidate_detections({{0, 0, 10, 5}}, {{0, 0, 10, 10}}, 0.5).empty());
  EXPECT_EQ(candidate_detections({{0, 0, 10, 5}, {50, 50, 5, 5}}, {{0, 0, 10, 10}}, 0.5),
            (std::vector<std::size_t>{1}));
  EXPECT_EQ(candidate_detections({{0, 0, 10, 5}}, {}, 0.5), (std::vector<std::size_t>{0}));
}

TEST(ResponseArgmax, TiesGoToCentre) {
  EXPECT_EQ(response_argmax(Tensor({5, 5}, 0.0)), 12u);
  EXPECT_EQ(response_argmax(Tensor({4, 4}, 1.0)), 5u);
  Tensor v({5, 5}, 0.0);
  v[3] = 2;
  v[24] = 2;
  EXPECT_EQ(response_argmax(v), 3u);
  v[7] = 2;
  EXPECT_EQ(response_argmax(v), 7u);
}

TEST(TrackerConfig, Validation) {
  TrackerConfig c;
  c.init_hits = 4;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrackerConfig{};
  c.alpha = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(c.validate());
  c.alpha = NAN;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Tracker, FrameOrderAndEmptyFrames) {
  const auto seq = two_target_sequence(3);
  Tracker t(NetworkConfig::toy(), toy_params(), always_tracked());
  EXPECT_TRUE(t.step_frame(1, seq.frames[0], {}).empty());
  EXPECT_THROW(t.step_frame(1, seq.frames[0], {}), ContractError);
  EXPECT_TRUE(t.step_frame(2, seq.frames[1], {}).empty());
  EXPECT_EQ(t.targets().size(), 0u);
}

TEST(Tracker, PropertyOneIdPerTargetAndDistinctIdsPerFrame) {
  const auto seq = two_target_sequence(12);
  const auto out = track_sequence(seq, NetworkConfig::toy(), toy_params(), always_tracked());
  std::set<long> ids;
  for (int f = 1; f <= 12; ++f) {
    std::set<long> in_frame;
    for (const auto& r : out)
      if (r.frame == f) EXPECT_TRUE(in_frame.insert(r.id).second);
    EXPECT_EQ(in_frame.size(), 2u) << f;
    ids.insert(in_frame.begin(), in_frame.end());
  }
  EXPECT_EQ(ids, (std::set<long>{1, 2}));
}

TEST(Tracker, DisabledOcclusionNeverAssociates) {
  const auto seq = two_target_sequence(10);
  Tracker t(NetworkConfig::toy(), toy_params(), always_tracked());
  for (int f = 1; f <= 10; ++f) t.step_frame(f, seq.frames[f - 1], dets_at(seq, f));
  EXPECT_EQ(t.association_rounds(), 0u);
  for (const auto& target : t.targets()) EXPECT_EQ(target.status, TargetStatus::Tracked);
}

TEST(Tracker, LongOcclusionTerminates) {
  // Infinite alpha puts every target into occlusion from frame 2 on.
  const auto seq = two_target_sequence(1);
  TrackerConfig c;
  c.alpha = std::numeric_limits<double>::infinity();
  Tracker t(NetworkConfig::toy(), toy_params(), c);
  t.step_frame(1, seq.frames[0], dets_at(seq, 1));
  ASSERT_EQ(t.targets().size(), 2u);
  for (int f = 2; f <= 31; ++f) {
    EXPECT_TRUE(t.step_frame(f, seq.frames[0], {}).empty());
    EXPECT_EQ(t.targets().size(), 2u) << f;
  }
  t.step_frame(32, seq.frames[0], {});
  EXPECT_EQ(t.targets().size(), 0u);
}

TEST(Tracker, SingleDetectionIsNeverConfirmed) {
  const auto seq = two_target_sequence(8);
  const auto d = dets_at(seq, 2);
  Tracker t(NetworkConfig::toy(), toy_params(), always_tracked());
  t.step_frame(1, seq.frames[0], {});
  t.step_frame(2, seq.frames[1], {d[0]});
  EXPECT_EQ(t.tentative_count(), 1u);
  for (int f = 3; f <= 6; ++f) EXPECT_TRUE(t.step_frame(f, seq.frames[f - 1], {}).empty());
  EXPECT_EQ(t.targets().size(), 0u);
  EXPECT_EQ(t.tentative_count(), 0u);
}

TEST(Tracker, RepeatedDetectionIsConfirmed) {
  const auto seq = two_target_sequence(5);
  Tracker t(NetworkConfig::toy(), toy_params(), always_tracked());
  t.step_frame(1, seq.frames[0], {});
  EXPECT_TRUE(t.step_frame(2, seq.frames[1], {dets_at(seq, 2)[0]}).empty());
  EXPECT_TRUE(t.step_frame(3, seq.frames[2], {dets_at(seq, 3)[0]}).empty());
  const auto rows = t.step_frame(4, seq.frames[3], {dets_at(seq, 4)[0]});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].id, 1);
  // The tentative history becomes the start of the tracklet.
  EXPECT_EQ(t.targets()[0].tracklet.size(), 3u);
}

TEST(Tracker, Deterministic) {
  const auto seq = two_target_sequence(8);
  TrackerConfig c;
  const auto a = track_sequence(seq, NetworkConfig::toy(), toy_params(), c);
  const auto b = track_sequence(seq, NetworkConfig::toy(), toy_params(), c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frame, b[i].frame);
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].bbox, b[i].bbox);
  }
}

TEST(Tracker, RejectsMismatchedParams) {
  auto params = toy_params();
  params.erase("corr.bias");
  EXPECT_THROW(Tracker(NetworkConfig::toy(), params, TrackerConfig{}), ContractError);
}
