#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "uma/errors.hpp"
#include "uma/metrics.hpp"
#include "uma/synthetic.hpp"

using namespace uma;

namespace {

DetectionRow row(int frame, long id, double x, double y = 10) { return {frame, id, BBox{x, y, 10, 20}, 1.0, {}}; }

std::vector<DetectionRow> two_tracks(int frames) {
  std::vector<DetectionRow> gt;
  for (int f = 1; f <= frames; ++f) {
    gt.push_back(row(f, 1, 0));
    gt.push_back(row(f, 2, 100));
  }
  return gt;
}

}  // namespace

TEST(ClearMot, Perfect) {
  const auto gt = two_tracks(10);
  const auto r = evaluate("s", gt, gt);
  EXPECT_EQ(r.mota, 1.0);
  EXPECT_EQ(r.motp, 1.0);
  EXPECT_EQ(r.idf1, 1.0);
  EXPECT_EQ(r.fp + r.fn + r.ids, 0);
  EXPECT_EQ(r.mt, 100.0);
  EXPECT_EQ(r.ml, 0.0);
}

TEST(ClearMot, EmptyHypothesis) {
  const auto gt = two_tracks(5);
  const auto r = evaluate("s", gt, {});
  EXPECT_EQ(r.mota, 0.0);
  EXPECT_EQ(r.fn, 10);
  EXPECT_EQ(r.fp, 0);
  EXPECT_EQ(r.ids, 0);
  EXPECT_EQ(r.idf1, 0.0);
  EXPECT_EQ(r.ml, 100.0);
}

TEST(ClearMot, HandcraftedScenario) {
  // Ten gt boxes. Track 1: missed at frame 3 (FN). Track 2: hyp 2 for
  // frames 1-2, hyp 3 for frames 3-4 (one IDS), missed at frame 5 (FN).
  // Hyp 4 at frame 4 overlaps nothing (FP).
  std::vector<DetectionRow> gt = two_tracks(5), hyp;
  for (int f = 1; f <= 5; ++f) {
    if (f != 3) hyp.push_back(row(f, 1, 0));
    if (f <= 2) hyp.push_back(row(f, 2, 100));
    if (f == 3 || f == 4) hyp.push_back(row(f, 3, 100));
  }
  hyp.push_back(row(4, 4, 300));
  const auto r = evaluate("s", gt, hyp);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.fn, 2);
  EXPECT_EQ(r.ids, 1);
  EXPECT_EQ(r.num_gt, 10);
  EXPECT_DOUBLE_EQ(r.mota, 0.6);
}

TEST(ClearMot, CarryOverKeepsMatchAgainstBetterNewcomer) {
  // gt 1 is matched to hyp 1 at frame 1. At frame 2 hyp 2 overlaps better
  // but hyp 1 still clears the threshold, so the match is kept: no switch.
  std::vector<DetectionRow> gt = {row(1, 1, 0), row(2, 1, 0)};
  std::vector<DetectionRow> hyp = {row(1, 1, 0), row(2, 1, 2), row(2, 2, 0)};
  const auto r = clear_mot(gt, hyp);
  EXPECT_EQ(r.ids, 0);
  EXPECT_EQ(r.fp, 1);
}

TEST(ClearMot, IouBelowThresholdIsNoMatch) {
  // Shift of 6 px on a 10 px wide box: IOU = 4*20 / (2*200 - 80) = 0.25.
  const auto r = clear_mot({row(1, 1, 0)}, {row(1, 1, 6)});
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.fn, 1);
}

TEST(ClearMot, ContractErrors) {
  const auto gt = two_tracks(2);
  EXPECT_THROW(clear_mot(gt, {row(1, 1, 0), row(1, 1, 50)}), ContractError);
  EXPECT_THROW(clear_mot(gt, {row(1, 0, 0)}), ContractError);
  EXPECT_THROW(clear_mot({}, gt), ContractError);
}

TEST(Idf1, IdSwapIsHalf) {
  const auto gt = two_tracks(10);
  std::vector<DetectionRow> hyp;
  for (int f = 1; f <= 10; ++f) {
    hyp.push_back(row(f, f <= 5 ? 1 : 2, 0));
    hyp.push_back(row(f, f <= 5 ? 2 : 1, 100));
  }
  EXPECT_DOUBLE_EQ(idf1(gt, hyp), 0.5);
  EXPECT_DOUBLE_EQ(idf1(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(idf1(gt, {}), 0.0);
}

TEST(Idf1, UnevenSplitClosedForm) {
  // One 10-frame gt track covered by hyp 1 for 7 frames and hyp 2 for 3:
  // IDTP = 7, IDF1 = 14 / 20.
  std::vector<DetectionRow> gt, hyp;
  for (int f = 1; f <= 10; ++f) {
    gt.push_back(row(f, 1, 0));
    hyp.push_back(row(f, f <= 7 ? 1 : 2, 0));
  }
  EXPECT_DOUBLE_EQ(idf1(gt, hyp), 0.7);
}

TEST(MtMl, CoverageBoundaries) {
  std::vector<DetectionRow> gt, hyp8, hyp2;
  for (int f = 1; f <= 10; ++f) {
    gt.push_back(row(f, 1, 0));
    if (f <= 8) hyp8.push_back(row(f, 1, 0));
    if (f <= 2) hyp2.push_back(row(f, 1, 0));
  }
  EXPECT_EQ(mt_ml(gt, hyp8).mt, 100.0);
  EXPECT_EQ(mt_ml(gt, hyp8).ml, 0.0);
  EXPECT_EQ(mt_ml(gt, hyp2).mt, 0.0);
  EXPECT_EQ(mt_ml(gt, hyp2).ml, 100.0);
}

TEST(Metrics, PropertyMotaIdentityAndPermutationInvariance) {
  // A noisy hypothesis built from synthetic gt: shifted boxes, dropped rows,
  // and ids permuted.
  SyntheticSpec spec;
  spec.frames = 40;
  spec.detection = {2.0, 0.2, 0.5};
  const auto seq = gen_synthetic_sequence(spec);
  std::vector<DetectionRow> hyp;
  std::map<long, long> perm;
  for (long id = 1; id <= 20; ++id) perm[id] = 21 - id;
  for (std::size_t i = 0; i < seq.gt.size(); ++i) {
    if (i % 7 == 3) continue;
    auto r = seq.gt[i];
    r.bbox.x += static_cast<double>(i % 5);
    if (r.frame > 20 && r.id == 4) r.id = 40;
    hyp.push_back(r);
  }
  auto relabelled = hyp;
  for (auto& r : relabelled) r.id = perm.count(r.id) ? perm[r.id] : r.id;
  const auto a = evaluate("a", seq.gt, hyp), b = evaluate("b", seq.gt, relabelled);
  EXPECT_NEAR(a.mota, 1.0 - static_cast<double>(a.fp + a.fn + a.ids) / static_cast<double>(a.num_gt), 1e-12);
  EXPECT_EQ(a.mota, b.mota);
  EXPECT_EQ(a.motp, b.motp);
  EXPECT_EQ(a.fp, b.fp);
  EXPECT_EQ(a.fn, b.fn);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_EQ(a.idf1, b.idf1);
  EXPECT_GE(a.ids, 1);
  EXPECT_LE(a.mt + a.ml, 100.0);
}

TEST(Metrics, SyntheticGtAgainstItselfIsPerfect) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticSpec spec;
    spec.frames = 30;
    spec.seed = seed;
    spec.occlusions = {{2, 5, 10}};
    const auto gt = gen_synthetic_sequence(spec).gt;
    const auto r = evaluate("s", gt, gt);
    EXPECT_EQ(r.mota, 1.0);
    EXPECT_EQ(r.idf1, 1.0);
  }
}

TEST(Metrics, AggregateSumsCounts) {
  const auto gt = two_tracks(5);
  std::vector<DetectionRow> partial(gt.begin(), gt.begin() + 6);
  const auto a = evaluate("a", gt, gt), b = evaluate("b", gt, partial);
  const auto total = aggregate({a, b});
  EXPECT_EQ(total.num_gt, a.num_gt + b.num_gt);
  EXPECT_EQ(total.fn, a.fn + b.fn);
  EXPECT_EQ(total.fp, a.fp + b.fp);
  EXPECT_EQ(total.ids, a.ids + b.ids);
  EXPECT_DOUBLE_EQ(total.mota, 1.0 - static_cast<double>(total.fn) / 20.0);
}

TEST(Metrics, CsvAndTableLayout) {
  const auto gt = two_tracks(5);
  const auto r = evaluate("seqA", gt, gt);
  const auto csv = report_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sequence,MOTA,MOTP,IDF1,MT,ML,FP,FN,IDS");
  EXPECT_NE(csv.find("seqA,1.000000,1.000000,1.000000,100.00,0.00,0,0,0"), std::string::npos) << csv;
  const auto table = report_table({r});
  EXPECT_NE(table.find("seqA"), std::string::npos);
  EXPECT_NE(table.find("MOTA"), std::string::npos);
}
