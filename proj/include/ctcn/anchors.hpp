#pragma once

#include <cstddef>
#include <vector>

namespace ctcn {

/// Pyramid geometry in normalized video time (video length 1).
/// Scales run min_scale..max_scale; scale l has input_snippets / 2^l cells
/// and the coarsest scale has exactly one cell.
struct AnchorConfig {
  std::size_t input_snippets = 64;
  int min_scale = 2;
  int max_scale = 6;
  std::size_t anchors_per_cell = 2;

  void validate() const;
  std::size_t cells(int scale) const;
  std::size_t count() const;
};

struct AnchorSpec {
  int scale = 0;
  std::size_t cell = 0;    // 1-based
  std::size_t anchor = 0;  // 1-based
  double center = 0.0;
  double length = 0.0;

  double start() const { return center - length / 2; }
  double end() const { return center + length / 2; }
};

/// s_l = 2^l / t0.
double basic_size(int scale, const AnchorConfig& cfg);

/// Anchor m of scale l spans [2/3 s_l, 4/3 s_l) in M equal steps. The
/// coarsest scale instead interpolates linearly from 2/3 s_L to s_L
/// inclusive. Lengths are clamped to at most 1.
double anchor_size(int scale, std::size_t m, const AnchorConfig& cfg);

/// Midpoint of cell j in an equal partition of [0,1].
double cell_center(int scale, std::size_t j, const AnchorConfig& cfg);

/// Scale-major, then cell, then anchor. The same ordering indexes the
/// per-scale prediction maps.
std::vector<AnchorSpec> enumerate_anchors(const AnchorConfig& cfg);

std::size_t anchor_flat_index(int scale, std::size_t cell, std::size_t anchor,
                              const AnchorConfig& cfg);
AnchorSpec anchor_from_flat_index(std::size_t index, const AnchorConfig& cfg);

}  // namespace ctcn
