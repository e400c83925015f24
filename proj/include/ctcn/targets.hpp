#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ctcn/anchors.hpp"
#include "ctcn/network.hpp"
#include "ctcn/tensor.hpp"

namespace ctcn {

/// Temporal segment in normalized video time.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double center() const { return 0.5 * (start + end); }
  double length() const { return end - start; }
  bool valid() const { return 0.0 <= start && start < end && end <= 1.0; }
};

struct GroundTruth {
  Segment segment;
  int label = 1;  // 1..A; 0 is background
};

Segment anchor_segment(const AnchorSpec& a);

/// Temporal intersection over union.
double tiou(const Segment& a, const Segment& b);

struct AnchorMatch {
  std::optional<std::size_t> matched_gt;
  double tiou = 0.0;
  int label = 0;
  bool positive = false;
};

using MatchResult = std::vector<AnchorMatch>;

inline constexpr double kPositiveTiou = 0.5;

/// Each anchor takes its highest-tIoU ground truth (lowest index on ties) and
/// is positive iff that tIoU exceeds 0.5.
MatchResult match_anchors(std::span<const AnchorSpec> anchors, std::span<const GroundTruth> gts);

struct Offsets {
  double beta = 0.0;   // log length ratio
  double gamma = 0.0;  // center shift in anchor lengths
};

Offsets encode(const AnchorSpec& anchor, const Segment& gt);

struct CenterLength {
  double center = 0.0;
  double length = 0.0;
};

/// Regressed center and length before clipping.
CenterLength decode_offsets(const AnchorSpec& anchor, double beta_hat, double gamma_hat);
/// Decoded segment clipped to [0, 1].
Segment decode(const AnchorSpec& anchor, double beta_hat, double gamma_hat);

struct OffsetTarget {
  std::size_t anchor = 0;
  Offsets offsets;
};

std::vector<OffsetTarget> offset_targets(std::span<const AnchorSpec> anchors,
                                         const MatchResult& match,
                                         std::span<const GroundTruth> gts);

/// Softmax over A+1 logits.
std::vector<double> class_confidence(std::span<const double> logits);

inline constexpr double kLogFloor = 1e-12;

double smooth_l1(double x);

/// -log of the matched class probability for positives, of the background
/// probability otherwise. `probs` holds one row of A+1 entries per anchor.
std::vector<double> classification_loss(std::span<const std::vector<double>> probs,
                                        const MatchResult& match);

std::vector<double> localization_loss(std::span<const Offsets> predicted,
                                      std::span<const Offsets> targets);

struct LossConfig {
  double negative_ratio = 3.0;
  /// Divide the objective by max(1, #positives). Off reproduces the plain sum.
  bool normalize_by_positives = false;
};

struct LossBreakdown {
  Tensor total;
  double classification = 0.0;
  double localization = 0.0;
  std::size_t positives = 0;
  std::vector<std::size_t> mined_negatives;  // anchor flat indices
};

/// Gathers logits of every anchor from the pyramid maps as an [N, A+1] tensor.
Tensor anchor_logits(const PyramidOutputs& out, const AnchorConfig& cfg, std::size_t num_classes);
/// Gathers [N, 2] (beta_hat, gamma_hat) for the requested anchors.
Tensor anchor_offsets(const PyramidOutputs& out, const AnchorConfig& cfg,
                      std::span<const std::size_t> anchors);

/// Per-video objective: classification and localization loss over positives
/// plus classification loss over the hardest ceil(ratio * #positives)
/// negatives (ratio negatives when there are no positives). Negative ties
/// resolve to the lower anchor index.
LossBreakdown total_loss(const PyramidOutputs& out, const AnchorConfig& cfg,
                         std::size_t num_classes, std::span<const AnchorSpec> anchors,
                         const MatchResult& match, std::span<const GroundTruth> gts,
                         const LossConfig& loss_cfg = {});

}  // namespace ctcn
