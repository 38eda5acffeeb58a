#include "uma/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "uma/association.hpp"
#include "uma/errors.hpp"

namespace uma {

namespace {

using FrameRows = std::map<int, std::vector<const DetectionRow*>>;

FrameRows group_by_frame(const std::vector<DetectionRow>& rows, const char* stream) {
  FrameRows frames;
  std::set<std::pair<int, long>> seen;
  for (const auto& r : rows) {
    if (r.id < 1) throw ContractError(std::string(stream) + ": id must be >= 1 (frame " + std::to_string(r.frame) + ")");
    if (!seen.emplace(r.frame, r.id).second) {
      throw ContractError(std::string(stream) + ": duplicate id " + std::to_string(r.id) + " in frame " +
                          std::to_string(r.frame));
    }
    frames[r.frame].push_back(&r);
  }
  for (auto& [frame, list] : frames) {
    std::sort(list.begin(), list.end(), [](const DetectionRow* a, const DetectionRow* b) { return a->id < b->id; });
  }
  return frames;
}

struct Matching {
  ClearMotResult counts;
  std::map<long, long> matched_frames;  // per gt id
  std::map<long, long> lifespan;        // per gt id
};

Matching match_sequence(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp, double thr) {
  const auto gt_frames = group_by_frame(gt, "gt");
  const auto hyp_frames = group_by_frame(hyp, "hyp");
  if (gt.empty()) throw ContractError("clear_mot: ground truth is empty");

  Matching m;
  std::set<int> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : hyp_frames) frames.insert(f);

  std::map<long, long> last_match;  // gt id -> hyp id
  static const std::vector<const DetectionRow*> kNone;
  for (int f : frames) {
    const auto git = gt_frames.find(f);
    const auto hit = hyp_frames.find(f);
    const auto& g = git != gt_frames.end() ? git->second : kNone;
    const auto& h = hit != hyp_frames.end() ? hit->second : kNone;
    m.counts.num_gt += static_cast<long>(g.size());
    m.counts.num_hyp += static_cast<long>(h.size());
    for (const auto* row : g) ++m.lifespan[row->id];

    std::vector<long> g_to_h(g.size(), -1);
    std::vector<char> h_used(h.size(), 0);

    // Carry-over: keep a gt's previous hypothesis if it is still close enough.
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto lm = last_match.find(g[i]->id);
      if (lm == last_match.end()) continue;
      for (std::size_t j = 0; j < h.size(); ++j) {
        if (h[j]->id == lm->second && !h_used[j] && iou(g[i]->bbox, h[j]->bbox) >= thr) {
          g_to_h[i] = static_cast<long>(j);
          h_used[j] = 1;
        }
      }
    }

    // Remaining pairs: maximise match count first, then summed IOU.
    std::vector<std::size_t> gi, hj;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g_to_h[i] < 0) gi.push_back(i);
    }
    for (std::size_t j = 0; j < h.size(); ++j) {
      if (!h_used[j]) hj.push_back(j);
    }
    if (!gi.empty() && !hj.empty()) {
      const double bonus = 2.0 * static_cast<double>(std::min(gi.size(), hj.size()) + 1);
      AffinityMatrix w(gi.size(), hj.size());
      for (std::size_t a = 0; a < gi.size(); ++a) {
        for (std::size_t b = 0; b < hj.size(); ++b) {
          const double o = iou(g[gi[a]]->bbox, h[hj[b]]->bbox);
          w(a, b) = o >= thr ? bonus + o : 0.0;
        }
      }
      const auto assignment = hungarian(w);
      for (std::size_t a = 0; a < gi.size(); ++a) {
        const long b = assignment.row_to_col[a];
        if (b < 0 || w(a, static_cast<std::size_t>(b)) == 0.0) continue;
        g_to_h[gi[a]] = static_cast<long>(hj[static_cast<std::size_t>(b)]);
        h_used[hj[static_cast<std::size_t>(b)]] = 1;
      }
    }

    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g_to_h[i] < 0) {
        ++m.counts.fn;
        continue;
      }
      const auto* hr = h[static_cast<std::size_t>(g_to_h[i])];
      ++m.counts.matches;
      ++m.matched_frames[g[i]->id];
      m.counts.iou_sum += iou(g[i]->bbox, hr->bbox);
      auto [lm, inserted] = last_match.emplace(g[i]->id, hr->id);
      if (!inserted) {
        if (lm->second != hr->id) ++m.counts.ids;
        lm->second = hr->id;
      }
    }
    for (std::size_t j = 0; j < h.size(); ++j) {
      if (!h_used[j]) ++m.counts.fp;
    }
  }

  auto& c = m.counts;
  c.mota = 1.0 - static_cast<double>(c.fp + c.fn + c.ids) / static_cast<double>(c.num_gt);
  c.motp = c.matches > 0 ? c.iou_sum / static_cast<double>(c.matches) : 0.0;
  for (const auto& [id, span] : m.lifespan) {
    const auto it = m.matched_frames.find(id);
    const double coverage = static_cast<double>(it == m.matched_frames.end() ? 0 : it->second) / static_cast<double>(span);
    ++c.gt_tracks;
    if (coverage >= 0.8) ++c.mostly_tracked;
    if (coverage <= 0.2) ++c.mostly_lost;
  }
  return m;
}

double percent(long part, long whole) { return whole > 0 ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0; }

}  // namespace

ClearMotResult clear_mot(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp,
                         double iou_threshold) {
  return match_sequence(gt, hyp, iou_threshold).counts;
}

long idtp_count(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp, double iou_threshold) {
  const auto gt_frames = group_by_frame(gt, "gt");
  const auto hyp_frames = group_by_frame(hyp, "hyp");
  std::map<long, std::size_t> gt_index, hyp_index;
  for (const auto& r : gt) gt_index.emplace(r.id, 0);
  for (const auto& r : hyp) hyp_index.emplace(r.id, 0);
  std::size_t k = 0;
  for (auto& [id, idx] : gt_index) idx = k++;
  k = 0;
  for (auto& [id, idx] : hyp_index) idx = k++;
  if (gt_index.empty() || hyp_index.empty()) return 0;

  AffinityMatrix counts(gt_index.size(), hyp_index.size());
  for (const auto& [f, g] : gt_frames) {
    const auto hit = hyp_frames.find(f);
    if (hit == hyp_frames.end()) continue;
    for (const auto* gr : g) {
      for (const auto* hr : hit->second) {
        if (iou(gr->bbox, hr->bbox) >= iou_threshold) counts(gt_index[gr->id], hyp_index[hr->id]) += 1.0;
      }
    }
  }
  const auto assignment = hungarian(counts);
  return std::lround(assignment.total);
}

double idf1(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp, double iou_threshold) {
  if (gt.empty() && hyp.empty()) throw ContractError("idf1: both streams are empty");
  const long idtp = idtp_count(gt, hyp, iou_threshold);
  return 2.0 * static_cast<double>(idtp) / static_cast<double>(gt.size() + hyp.size());
}

TrackCoverage mt_ml(const std::vector<DetectionRow>& gt, const std::vector<DetectionRow>& hyp, double iou_threshold) {
  const auto c = clear_mot(gt, hyp, iou_threshold);
  return {percent(c.mostly_tracked, c.gt_tracks), percent(c.mostly_lost, c.gt_tracks)};
}

MetricsReport evaluate(const std::string& sequence, const std::vector<DetectionRow>& gt,
                       const std::vector<DetectionRow>& hyp, double iou_threshold) {
  const auto c = clear_mot(gt, hyp, iou_threshold);
  MetricsReport r;
  r.sequence = sequence;
  r.fp = c.fp;
  r.fn = c.fn;
  r.ids = c.ids;
  r.num_gt = c.num_gt;
  r.num_hyp = c.num_hyp;
  r.matches = c.matches;
  r.iou_sum = c.iou_sum;
  r.mota = c.mota;
  r.motp = c.motp;
  r.idtp = idtp_count(gt, hyp, iou_threshold);
  r.idf1 = 2.0 * static_cast<double>(r.idtp) / static_cast<double>(r.num_gt + r.num_hyp);
  r.gt_tracks = c.gt_tracks;
  r.mostly_tracked = c.mostly_tracked;
  r.mostly_lost = c.mostly_lost;
  r.mt = percent(c.mostly_tracked, c.gt_tracks);
  r.ml = percent(c.mostly_lost, c.gt_tracks);
  return r;
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports, const std::string& name) {
  MetricsReport a;
  a.sequence = name;
  for (const auto& r : reports) {
    a.fp += r.fp;
    a.fn += r.fn;
    a.ids += r.ids;
    a.num_gt += r.num_gt;
    a.num_hyp += r.num_hyp;
    a.matches += r.matches;
    a.iou_sum += r.iou_sum;
    a.idtp += r.idtp;
    a.gt_tracks += r.gt_tracks;
    a.mostly_tracked += r.mostly_tracked;
    a.mostly_lost += r.mostly_lost;
  }
  if (a.num_gt == 0) throw ContractError("aggregate: no ground truth");
  a.mota = 1.0 - static_cast<double>(a.fp + a.fn + a.ids) / static_cast<double>(a.num_gt);
  a.motp = a.matches > 0 ? a.iou_sum / static_cast<double>(a.matches) : 0.0;
  a.idf1 = 2.0 * static_cast<double>(a.idtp) / static_cast<double>(a.num_gt + a.num_hyp);
  a.mt = percent(a.mostly_tracked, a.gt_tracks);
  a.ml = percent(a.mostly_lost, a.gt_tracks);
  return a;
}

std::string report_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "sequence,MOTA,MOTP,IDF1,MT,ML,FP,FN,IDS\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.2f,%.2f,%ld,%ld,%ld\n", r.sequence.c_str(), r.mota, r.motp,
                  r.idf1, r.mt, r.ml, r.fp, r.fn, r.ids);
    out += line;
  }
  return out;
}

std::string report_table(const std::vector<MetricsReport>& reports) {
  std::size_t name_width = 8;
  for (const auto& r : reports) name_width = std::max(name_width, r.sequence.size());
  const int nw = static_cast<int>(name_width);
  char line[512];
  std::snprintf(line, sizeof(line), "%-*s %9s %9s %9s %8s %8s %7s %7s %6s\n", nw, "sequence", "MOTA", "MOTP", "IDF1",
                "MT%", "ML%", "FP", "FN", "IDS");
  std::string out = line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-*s %9.4f %9.4f %9.4f %8.2f %8.2f %7ld %7ld %6ld\n", nw, r.sequence.c_str(),
                  r.mota, r.motp, r.idf1, r.mt, r.ml, r.fp, r.fn, r.ids);
    out += line;
  }
  return out;
}

}  // namespace uma
