#include "ctcn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace ctcn {

namespace {

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.segment.start < b.segment.start;
}

}  // namespace

std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsOptions& opts) {
  if (!(opts.sigma > 0.0)) throw std::invalid_argument("soft-nms sigma must be positive");
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  while (!dets.empty()) {
    auto best = std::min_element(dets.begin(), dets.end(), ranks_before);
    kept.push_back(*best);
    dets.erase(best);
    const Segment top = kept.back().segment;
    std::vector<Detection> rest;
    rest.reserve(dets.size());
    for (auto& d : dets) {
      const double o = tiou(top, d.segment);
      d.score *= std::exp(-(o * o) / opts.sigma);
      if (d.score >= opts.score_floor) rest.push_back(std::move(d));
    }
    dets = std::move(rest);
  }
  // selection order is already non-increasing in final score
  std::stable_sort(kept.begin(), kept.end(), ranks_before);
  return kept;
}

std::vector<Detection> soft_nms_per_class(std::vector<Detection> dets, const SoftNmsOptions& opts) {
  std::map<std::pair<std::string, int>, std::vector<Detection>> groups;
  for (auto& d : dets) groups[{d.video_id, d.label}].push_back(std::move(d));
  std::vector<Detection> out;
  for (auto& [key, group] : groups) {
    auto kept = soft_nms(std::move(group), opts);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

double average_precision(std::span<const Detection> dets, std::span<const Instance> gts,
                         double threshold) {
  std::vector<Detection> ranked(dets.begin(), dets.end());
  std::stable_sort(ranked.begin(), ranked.end(), ranks_before);
  {
    std::set<std::tuple<std::string, double, double, double>> seen;
    for (const auto& d : ranked) {
      if (!seen.insert({d.video_id, d.score, d.segment.start, d.segment.end}).second) {
        throw std::invalid_argument("duplicate detection in video " + d.video_id + " at [" +
                                    std::to_string(d.segment.start) + ", " +
                                    std::to_string(d.segment.end) + "]");
      }
    }
  }
  if (gts.empty() || ranked.empty()) return 0.0;

  std::unordered_map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t g = 0; g < gts.size(); ++g) by_video[gts[g].video_id].push_back(g);
  std::vector<bool> taken(gts.size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto it = by_video.find(ranked[i].video_id);
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    if (it != by_video.end()) {
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double o = tiou(ranked[i].segment, gts[g].segment);
        if (o > best_iou) {
          best_iou = o;
          best = g;
        }
      }
    }
    if (best && best_iou >= threshold) {
      taken[*best] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }

  // precision envelope, then area over recall steps
  std::vector<double> mprec{0.0}, mrec{0.0};
  mprec.insert(mprec.end(), precision.begin(), precision.end());
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mprec.push_back(0.0);
  mrec.push_back(1.0);
  for (std::size_t i = mprec.size() - 1; i-- > 0;) mprec[i] = std::max(mprec[i], mprec[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mprec[i];
  }
  return ap;
}

std::vector<double> activitynet_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

EvalReport map_report(std::span<const Detection> dets, std::span<const Instance> gts,
                      std::span<const double> thresholds, int num_classes) {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  std::vector<std::vector<Detection>> det_by_class(static_cast<std::size_t>(num_classes));
  std::vector<std::vector<Instance>> gt_by_class(static_cast<std::size_t>(num_classes));
  for (const auto& d : dets) {
    if (d.label < 1 || d.label > num_classes) {
      throw std::invalid_argument("detection label " + std::to_string(d.label) + " outside 1.." +
                                  std::to_string(num_classes));
    }
    det_by_class[static_cast<std::size_t>(d.label - 1)].push_back(d);
  }
  for (const auto& g : gts) {
    if (g.label < 1 || g.label > num_classes) {
      throw std::invalid_argument("ground-truth label " + std::to_string(g.label) +
                                  " outside 1.." + std::to_string(num_classes));
    }
    gt_by_class[static_cast<std::size_t>(g.label - 1)].push_back(g);
  }

  EvalReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double thr : thresholds) {
    std::vector<std::optional<double>> row;
    double total = 0.0;
    int counted = 0;
    for (int k = 0; k < num_classes; ++k) {
      const auto ki = static_cast<std::size_t>(k);
      if (gt_by_class[ki].empty()) {
        row.emplace_back();
        continue;
      }
      const double ap = average_precision(det_by_class[ki], gt_by_class[ki], thr);
      row.emplace_back(ap);
      total += ap;
      ++counted;
    }
    report.ap.push_back(std::move(row));
    report.map.push_back(counted ? total / counted : 0.0);
  }
  double s = 0.0;
  for (double m : report.map) s += m;
  report.mean_map = report.map.empty() ? 0.0 : s / static_cast<double>(report.map.size());
  return report;
}

std::vector<ArAnPoint> ar_an_curve(std::span<const Detection> proposals,
                                   std::span<const Instance> gts,
                                   std::span<const std::string> videos,
                                   std::span<const double> an_grid,
                                   std::span<const double> tiou_grid) {
  std::vector<double> scores;
  for (const auto& p : proposals) scores.push_back(p.score);
  std::sort(scores.begin(), scores.end(), std::greater<>());

  std::unordered_map<std::string, std::vector<Segment>> gt_by_video;
  for (const auto& g : gts) gt_by_video[g.video_id].push_back(g.segment);
  std::vector<std::string> scored_videos;
  for (const auto& v : videos)
    if (gt_by_video.count(v)) scored_videos.push_back(v);

  std::vector<ArAnPoint> curve;
  for (double an : an_grid) {
    ArAnPoint pt{an, 0.0};
    const auto wanted = static_cast<std::size_t>(std::llround(an * static_cast<double>(videos.size())));
    if (wanted > 0 && !scores.empty() && !scored_videos.empty()) {
      const double cut = scores[std::min(wanted, scores.size()) - 1];
      std::unordered_map<std::string, std::vector<Segment>> kept;
      for (const auto& p : proposals)
        if (p.score >= cut) kept[p.video_id].push_back(p.segment);
      double total = 0.0;
      for (const auto& v : scored_videos) {
        const auto& truth = gt_by_video[v];
        const auto& props = kept[v];
        double video_recall = 0.0;
        for (double thr : tiou_grid) {
          std::size_t hit = 0;
          for (const auto& g : truth) {
            const bool found = std::any_of(props.begin(), props.end(),
                                           [&](const Segment& p) { return tiou(p, g) >= thr; });
            hit += found;
          }
          video_recall += static_cast<double>(hit) / static_cast<double>(truth.size());
        }
        total += video_recall / static_cast<double>(tiou_grid.size());
      }
      pt.average_recall = total / static_cast<double>(scored_videos.size());
    }
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace ctcn
