#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctcn/targets.hpp"

namespace ctcn {

struct Detection {
  std::string video_id;
  int label = 1;
  double score = 0.0;
  Segment segment;
};

/// Ground-truth instance keyed by video.
struct Instance {
  std::string video_id;
  int label = 1;
  Segment segment;
};

struct SoftNmsOptions {
  double sigma = 0.5;
  double score_floor = 1e-3;
};

/// Gaussian Soft-NMS within one (video, class) group: repeatedly keep the
/// best remaining detection and decay the others by exp(-tiou^2 / sigma).
/// Detections decayed below the floor are dropped. Output is sorted by final
/// score, descending.
std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsOptions& opts = {});

/// Groups by (video, label), runs soft_nms on each group and merges.
std::vector<Detection> soft_nms_per_class(std::vector<Detection> dets,
                                          const SoftNmsOptions& opts = {});

/// All-points interpolated AP for one class. Detections are ranked by score
/// (ties by segment start); each one greedily claims the unmatched ground
/// truth of its video with the highest tIoU if that tIoU reaches the
/// threshold. Returns 0 when there are no ground truths.
double average_precision(std::span<const Detection> dets, std::span<const Instance> gts,
                         double threshold);

inline const std::vector<double> kThumosThresholds{0.1, 0.2, 0.3, 0.4, 0.5};
std::vector<double> activitynet_thresholds();  // 0.50:0.05:0.95

struct ArAnPoint {
  double average_number = 0.0;
  double average_recall = 0.0;
};

struct EvalReport {
  std::vector<double> thresholds;
  /// ap[t][k-1]: AP of class k at thresholds[t]; empty when class k has no
  /// ground truth (such classes are left out of the mean).
  std::vector<std::vector<std::optional<double>>> ap;
  std::vector<double> map;  // per threshold
  double mean_map = 0.0;
  std::vector<ArAnPoint> ar_an;
};

EvalReport map_report(std::span<const Detection> dets, std::span<const Instance> gts,
                      std::span<const double> thresholds, int num_classes);

inline const std::vector<double> kDefaultAnGrid{1, 5, 10, 20, 40, 60, 80, 100};

/// Average recall against the average number of proposals per video. For
/// each AN the highest-scoring proposals are kept with a global score cut so
/// that round(AN * #videos) survive (ties at the cut are kept). Recall is
/// averaged over tIoU thresholds and over videos that have ground truth.
std::vector<ArAnPoint> ar_an_curve(std::span<const Detection> proposals,
                                   std::span<const Instance> gts,
                                   std::span<const std::string> videos,
                                   std::span<const double> an_grid,
                                   std::span<const double> tiou_grid);

}  // namespace ctcn
