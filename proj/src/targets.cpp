#include "ctcn/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ctcn {

Segment anchor_segment(const AnchorSpec& a) { return {a.start(), a.end()}; }

double tiou(const Segment& a, const Segment& b) {
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchResult match_anchors(std::span<const AnchorSpec> anchors, std::span<const GroundTruth> gts) {
  MatchResult out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Segment a = anchor_segment(anchors[i]);
    AnchorMatch& m = out[i];
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = tiou(a, gts[g].segment);
      if (!m.matched_gt || v > m.tiou) {
        m.matched_gt = g;
        m.tiou = v;
      }
    }
    m.positive = m.matched_gt && m.tiou > kPositiveTiou;
    m.label = m.positive ? gts[*m.matched_gt].label : 0;
  }
  return out;
}

Offsets encode(const AnchorSpec& anchor, const Segment& gt) {
  return {std::log(gt.length() / anchor.length), (gt.center() - anchor.center) / anchor.length};
}

CenterLength decode_offsets(const AnchorSpec& anchor, double beta_hat, double gamma_hat) {
  return {anchor.center + anchor.length * gamma_hat, std::exp(beta_hat) * anchor.length};
}

Segment decode(const AnchorSpec& anchor, double beta_hat, double gamma_hat) {
  const auto cl = decode_offsets(anchor, beta_hat, gamma_hat);
  return {std::clamp(cl.center - cl.length / 2, 0.0, 1.0),
          std::clamp(cl.center + cl.length / 2, 0.0, 1.0)};
}

std::vector<OffsetTarget> offset_targets(std::span<const AnchorSpec> anchors,
                                         const MatchResult& match,
                                         std::span<const GroundTruth> gts) {
  std::vector<OffsetTarget> out;
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (!match[i].positive) continue;
    out.push_back({i, encode(anchors[i], gts[*match[i].matched_gt].segment)});
  }
  return out;
}

std::vector<double> class_confidence(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += out[k] = std::exp(logits[k] - mx);
  for (auto& v : out) v /= z;
  return out;
}

double smooth_l1(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }

std::vector<double> classification_loss(std::span<const std::vector<double>> probs,
                                        const MatchResult& match) {
  if (probs.size() != match.size()) {
    throw std::invalid_argument("got " + std::to_string(probs.size()) + " probability rows for " +
                                std::to_string(match.size()) + " anchors");
  }
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto k = static_cast<std::size_t>(match[i].positive ? match[i].label : 0);
    out[i] = -std::log(std::max(probs[i].at(k), kLogFloor));
  }
  return out;
}

std::vector<double> localization_loss(std::span<const Offsets> predicted,
                                      std::span<const Offsets> targets) {
  if (predicted.size() != targets.size()) {
    throw std::invalid_argument("prediction/target count mismatch");
  }
  std::vector<double> out(predicted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = smooth_l1(predicted[i].beta - targets[i].beta) +
             smooth_l1(predicted[i].gamma - targets[i].gamma);
  }
  return out;
}

namespace {

// Flat offsets of each scale inside concat_flat of the per-scale maps.
std::vector<std::size_t> scale_offsets(const AnchorConfig& cfg, std::size_t channels) {
  std::vector<std::size_t> out;
  std::size_t acc = 0;
  for (int l = cfg.min_scale; l <= cfg.max_scale; ++l) {
    out.push_back(acc);
    acc += channels * cfg.cells(l);
  }
  return out;
}

std::vector<Tensor> collect(const PyramidOutputs& out, bool cls) {
  std::vector<Tensor> maps;
  for (const auto& s : out.scales) maps.push_back(cls ? s.cls : s.reg);
  return maps;
}

void check_outputs(const PyramidOutputs& out, const AnchorConfig& cfg, std::size_t A1) {
  if (out.scales.size() != static_cast<std::size_t>(cfg.max_scale - cfg.min_scale + 1)) {
    throw std::invalid_argument("pyramid has " + std::to_string(out.scales.size()) +
                                " scales, anchor config expects P" + std::to_string(cfg.min_scale) +
                                "..P" + std::to_string(cfg.max_scale));
  }
  const std::size_t M = cfg.anchors_per_cell;
  for (std::size_t i = 0; i < out.scales.size(); ++i) {
    const int l = cfg.min_scale + static_cast<int>(i);
    const std::size_t cells = cfg.cells(l);
    const auto& s = out.scales[i];
    if (s.scale != l) throw std::invalid_argument("pyramid entry " + std::to_string(i) + " is P" +
                                                  std::to_string(s.scale) + ", expected P" + std::to_string(l));
    const Shape reg{2 * M, cells};
    if (s.reg.shape() != reg) {
      throw std::invalid_argument("P" + std::to_string(l) + " regression map is " + shape_str(s.reg.shape()) +
                                  ", expected " + shape_str(reg));
    }
    if (A1 != 0 && s.cls.shape() != Shape{A1 * M, cells}) {
      throw std::invalid_argument("P" + std::to_string(l) + " score map is " + shape_str(s.cls.shape()) +
                                  ", expected " + shape_str(Shape{A1 * M, cells}));
    }
  }
}

}  // namespace

Tensor anchor_logits(const PyramidOutputs& out, const AnchorConfig& cfg, std::size_t num_classes) {
  const std::size_t M = cfg.anchors_per_cell;
  const std::size_t A1 = num_classes + 1;
  check_outputs(out, cfg, A1);
  const auto offsets = scale_offsets(cfg, A1 * M);
  std::vector<std::size_t> idx;
  idx.reserve(cfg.count() * A1);
  for (int l = cfg.min_scale; l <= cfg.max_scale; ++l) {
    const std::size_t cells = cfg.cells(l);
    const std::size_t base = offsets[static_cast<std::size_t>(l - cfg.min_scale)];
    for (std::size_t j = 0; j < cells; ++j)
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < A1; ++k) idx.push_back(base + (k * M + m) * cells + j);
  }
  const auto maps = collect(out, true);
  return gather(concat_flat(maps), idx, {cfg.count(), A1});
}

Tensor anchor_offsets(const PyramidOutputs& out, const AnchorConfig& cfg,
                      std::span<const std::size_t> anchors) {
  check_outputs(out, cfg, 0);  // score maps are not read here
  const std::size_t M = cfg.anchors_per_cell;
  const auto offsets = scale_offsets(cfg, 2 * M);
  std::vector<std::size_t> idx;
  for (std::size_t a : anchors) {
    const AnchorSpec spec = anchor_from_flat_index(a, cfg);
    const std::size_t cells = cfg.cells(spec.scale);
    const std::size_t base = offsets[static_cast<std::size_t>(spec.scale - cfg.min_scale)];
    const std::size_t m = spec.anchor - 1, j = spec.cell - 1;
    idx.push_back(base + m * cells + j);        // beta_hat
    idx.push_back(base + (M + m) * cells + j);  // gamma_hat
  }
  const auto maps = collect(out, false);
  return gather(concat_flat(maps), idx, {anchors.size(), 2});
}

LossBreakdown total_loss(const PyramidOutputs& out, const AnchorConfig& cfg,
                         std::size_t num_classes, std::span<const AnchorSpec> anchors,
                         const MatchResult& match, std::span<const GroundTruth> gts,
                         const LossConfig& loss_cfg) {
  const std::size_t n = cfg.count();
  if (match.size() != n || anchors.size() != n) {
    throw std::invalid_argument("match covers " + std::to_string(match.size()) + " anchors, expected " +
                                std::to_string(n));
  }
  const std::size_t A1 = num_classes + 1;
  Tensor logp = log_softmax_rows(anchor_logits(out, cfg, num_classes));
  std::vector<std::size_t> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = i * A1 + static_cast<std::size_t>(match[i].positive ? match[i].label : 0);
  }
  Tensor nll = minimum(-gather(logp, target, {n}), -std::log(kLogFloor));
  const auto nll_v = nll.data();

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < n; ++i) (match[i].positive ? positives : negatives).push_back(i);

  const std::size_t budget =
      positives.empty()
          ? static_cast<std::size_t>(std::ceil(loss_cfg.negative_ratio))
          : static_cast<std::size_t>(std::ceil(loss_cfg.negative_ratio *
                                               static_cast<double>(positives.size())));
  const std::size_t keep = std::min(budget, negatives.size());
  std::partial_sort(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(keep),
                    negatives.end(), [&](std::size_t a, std::size_t b) {
                      if (nll_v[a] != nll_v[b]) return nll_v[a] > nll_v[b];
                      return a < b;
                    });
  negatives.resize(keep);

  LossBreakdown res;
  res.positives = positives.size();
  res.mined_negatives = negatives;

  std::vector<std::size_t> selected = positives;
  selected.insert(selected.end(), negatives.begin(), negatives.end());
  std::vector<Tensor> terms;
  if (!selected.empty()) {
    terms.push_back(sum(gather(nll, selected, {selected.size()})));
    res.classification = terms.back().item();
  }
  if (!positives.empty()) {
    std::vector<double> tgt;
    for (const auto& t : offset_targets(anchors, match, gts)) {
      tgt.push_back(t.offsets.beta);
      tgt.push_back(t.offsets.gamma);
    }
    Tensor pred = anchor_offsets(out, cfg, positives);
    terms.push_back(sum(smooth_l1(pred - Tensor(pred.shape(), std::move(tgt)))));
    res.localization = terms.back().item();
  }

  Tensor total = terms.empty() ? Tensor::scalar(0.0) : terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  if (loss_cfg.normalize_by_positives) {
    const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives.size()));
    total = total * scale;
    res.classification *= scale;
    res.localization *= scale;
  }
  res.total = total;
  return res;
}

}  // namespace ctcn
