#include "ctcn/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctcn {

namespace {

void sort_actions(std::vector<GroundTruth>& actions) {
  std::stable_sort(actions.begin(), actions.end(), [](const GroundTruth& a, const GroundTruth& b) {
    return a.segment.start < b.segment.start;
  });
}

// Builds a [c, t] tensor whose column i is column `source[i]` of x.
Tensor pick_columns(const Tensor& x, const std::vector<std::size_t>& source) {
  const std::size_t c = x.extent(0), t = x.extent(1);
  const auto xd = x.data();
  std::vector<double> out(c * source.size());
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t i = 0; i < source.size(); ++i) out[r * source.size() + i] = xd[r * t + source[i]];
  return Tensor({c, source.size()}, std::move(out));
}

}  // namespace

SnippetSpan snippet_span(const Segment& s, std::size_t snippets) {
  const double t = static_cast<double>(snippets);
  auto first = static_cast<std::size_t>(std::clamp(std::round(s.start * t), 0.0, t - 1));
  auto last = static_cast<std::size_t>(std::clamp(std::round(s.end * t), 0.0, t));
  if (last <= first) last = first + 1;
  return {first, last};
}

LabeledVideo random_move(const LabeledVideo& v, Rng& rng) {
  const std::size_t t = v.features.snippets();
  if (v.actions.empty()) return v;

  std::vector<SnippetSpan> spans;
  std::size_t action_snippets = 0;
  for (const auto& a : v.actions) {
    spans.push_back(snippet_span(a.segment, t));
    action_snippets += spans.back().size();
  }
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].last) return v;
  }
  if (action_snippets >= t) return v;

  std::vector<bool> in_action(t, false);
  for (const auto& s : spans)
    for (std::size_t i = s.first; i < s.last; ++i) in_action[i] = true;
  std::vector<std::size_t> background;
  for (std::size_t i = 0; i < t; ++i)
    if (!in_action[i]) background.push_back(i);

  // Insertion gaps 0..B in the background, one per action, plus a shuffled
  // action order.
  std::vector<std::size_t> order(spans.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> gap_dist(0, background.size());
  std::vector<std::size_t> gaps(spans.size());
  for (auto& g : gaps) g = gap_dist(rng);
  std::sort(gaps.begin(), gaps.end());

  std::vector<std::size_t> source;
  source.reserve(t);
  LabeledVideo out{v.id, {}, {}};
  std::size_t next_bg = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    while (next_bg < gaps[k]) source.push_back(background[next_bg++]);
    const auto& span = spans[order[k]];
    const GroundTruth& gt = v.actions[order[k]];
    const double shift = static_cast<double>(source.size()) / static_cast<double>(t) -
                         static_cast<double>(span.first) / static_cast<double>(t);
    for (std::size_t i = span.first; i < span.last; ++i) source.push_back(i);
    GroundTruth moved = gt;
    moved.segment.start = std::clamp(gt.segment.start + shift, 0.0, 1.0);
    moved.segment.end = std::clamp(moved.segment.start + gt.segment.length(), 0.0, 1.0);
    out.actions.push_back(moved);
  }
  while (next_bg < background.size()) source.push_back(background[next_bg++]);

  out.features = FeatureSequence(pick_columns(v.features.values, source));
  sort_actions(out.actions);
  return out;
}

LabeledVideo random_crop(const LabeledVideo& v, Rng& rng, const CropOptions& opts) {
  const std::size_t t = v.features.snippets();
  if (v.actions.empty()) return v;
  const auto shortest = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(opts.min_window * static_cast<double>(t))));
  std::uniform_int_distribution<std::size_t> len_dist(std::min(shortest, t), t);

  for (int attempt = 0; attempt < opts.max_tries; ++attempt) {
    const std::size_t len = len_dist(rng);
    std::uniform_int_distribution<std::size_t> start_dist(0, t - len);
    const std::size_t first = start_dist(rng);
    const double ws = static_cast<double>(first) / static_cast<double>(t);
    const double we = static_cast<double>(first + len) / static_cast<double>(t);

    std::vector<GroundTruth> kept;
    for (const auto& a : v.actions) {
      const double s = std::max(a.segment.start, ws);
      const double e = std::min(a.segment.end, we);
      if (e <= s || (e - s) < opts.min_retention * a.segment.length()) continue;
      GroundTruth g = a;
      g.segment.start = std::clamp((s - ws) / (we - ws), 0.0, 1.0);
      g.segment.end = std::clamp((e - ws) / (we - ws), 0.0, 1.0);
      kept.push_back(g);
    }
    if (kept.empty()) continue;

    std::vector<std::size_t> source(t);
    for (std::size_t i = 0; i < t; ++i) source[i] = first + i * len / t;
    LabeledVideo out{v.id, FeatureSequence(pick_columns(v.features.values, source)), std::move(kept)};
    sort_actions(out.actions);
    return out;
  }
  return v;
}

}  // namespace ctcn
