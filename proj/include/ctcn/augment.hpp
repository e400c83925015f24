#pragma once

#include <string>
#include <vector>

#include "ctcn/targets.hpp"
#include "ctcn/temporal_conv.hpp"

namespace ctcn {

struct LabeledVideo {
  std::string id;
  FeatureSequence features;
  std::vector<GroundTruth> actions;  // sorted by start
};

/// Snippet interval [first, last) covered by a segment, at least one snippet.
struct SnippetSpan {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first; }
};
SnippetSpan snippet_span(const Segment& s, std::size_t snippets);

/// Cuts every action out, concatenates the background and re-inserts the
/// actions (features copied verbatim) at random non-overlapping positions.
/// Videos without background, without actions, or with overlapping actions
/// come back unchanged.
LabeledVideo random_move(const LabeledVideo& v, Rng& rng);

struct CropOptions {
  double min_window = 0.5;   // shortest window as a fraction of the video
  double min_retention = 0.5;
  int max_tries = 20;
};

/// Crops a random window, drops actions keeping less than min_retention of
/// their length, and stretches the window back to the original snippet count
/// with nearest-neighbor sampling. Falls back to the input when no window
/// keeps an action.
LabeledVideo random_crop(const LabeledVideo& v, Rng& rng, const CropOptions& opts = {});

}  // namespace ctcn
