#include "ctcn/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ctcn {

namespace {

void check_scale(int scale, const AnchorConfig& cfg) {
  if (scale < cfg.min_scale || scale > cfg.max_scale) {
    throw std::out_of_range("scale " + std::to_string(scale) + " outside [" +
                            std::to_string(cfg.min_scale) + ", " + std::to_string(cfg.max_scale) +
                            "]");
  }
}

}  // namespace

void AnchorConfig::validate() const {
  if (min_scale < 0 || max_scale < min_scale) {
    throw std::invalid_argument("invalid scale range [" + std::to_string(min_scale) + ", " +
                                std::to_string(max_scale) + "]");
  }
  if (anchors_per_cell == 0) throw std::invalid_argument("need at least one anchor per cell");
  const std::size_t needed = std::size_t{1} << max_scale;
  if (input_snippets != needed) {
    throw std::invalid_argument("input snippet count " + std::to_string(input_snippets) +
                                " must be 2^" + std::to_string(max_scale) + " = " +
                                std::to_string(needed) + " for scales up to P" +
                                std::to_string(max_scale));
  }
}

std::size_t AnchorConfig::cells(int scale) const { return input_snippets >> scale; }

std::size_t AnchorConfig::count() const {
  std::size_t n = 0;
  for (int l = min_scale; l <= max_scale; ++l) n += cells(l);
  return n * anchors_per_cell;
}

double basic_size(int scale, const AnchorConfig& cfg) {
  check_scale(scale, cfg);
  return std::ldexp(1.0, scale) / static_cast<double>(cfg.input_snippets);
}

double anchor_size(int scale, std::size_t m, const AnchorConfig& cfg) {
  const std::size_t M = cfg.anchors_per_cell;
  if (m < 1 || m > M) {
    throw std::out_of_range("anchor index " + std::to_string(m) + " outside [1, " +
                            std::to_string(M) + "]");
  }
  const double s = basic_size(scale, cfg);
  const double k = static_cast<double>(m - 1);
  double len;
  if (scale < cfg.max_scale) {
    len = 2.0 / 3.0 * s + 2.0 * k / (3.0 * static_cast<double>(M)) * s;
  } else if (M == 1) {
    len = 2.0 / 3.0 * s;
  } else {
    len = 2.0 / 3.0 * s + k / (3.0 * static_cast<double>(M - 1)) * s;
  }
  return std::min(len, 1.0);
}

double cell_center(int scale, std::size_t j, const AnchorConfig& cfg) {
  check_scale(scale, cfg);
  if (j < 1 || j > cfg.cells(scale)) {
    throw std::out_of_range("cell " + std::to_string(j) + " outside [1, " +
                            std::to_string(cfg.cells(scale)) + "] at scale " +
                            std::to_string(scale));
  }
  return static_cast<double>(2 * j - 1) / std::ldexp(1.0, cfg.max_scale + 1 - scale);
}

std::vector<AnchorSpec> enumerate_anchors(const AnchorConfig& cfg) {
  cfg.validate();
  std::vector<AnchorSpec> out;
  out.reserve(cfg.count());
  for (int l = cfg.min_scale; l <= cfg.max_scale; ++l) {
    for (std::size_t j = 1; j <= cfg.cells(l); ++j) {
      const double c = cell_center(l, j, cfg);
      for (std::size_t m = 1; m <= cfg.anchors_per_cell; ++m) {
        out.push_back({l, j, m, c, anchor_size(l, m, cfg)});
      }
    }
  }
  return out;
}

std::size_t anchor_flat_index(int scale, std::size_t cell, std::size_t anchor,
                              const AnchorConfig& cfg) {
  check_scale(scale, cfg);
  std::size_t before = 0;
  for (int l = cfg.min_scale; l < scale; ++l) before += cfg.cells(l);
  if (cell < 1 || cell > cfg.cells(scale) || anchor < 1 || anchor > cfg.anchors_per_cell) {
    throw std::out_of_range("anchor (" + std::to_string(scale) + ", " + std::to_string(cell) +
                            ", " + std::to_string(anchor) + ") out of range");
  }
  return (before + cell - 1) * cfg.anchors_per_cell + (anchor - 1);
}

AnchorSpec anchor_from_flat_index(std::size_t index, const AnchorConfig& cfg) {
  if (index >= cfg.count()) {
    throw std::out_of_range("anchor index " + std::to_string(index) + " >= " +
                            std::to_string(cfg.count()));
  }
  const std::size_t M = cfg.anchors_per_cell;
  std::size_t cell_index = index / M;
  const std::size_t m = index % M + 1;
  for (int l = cfg.min_scale; l <= cfg.max_scale; ++l) {
    if (cell_index < cfg.cells(l)) {
      const std::size_t j = cell_index + 1;
      return {l, j, m, cell_center(l, j, cfg), anchor_size(l, m, cfg)};
    }
    cell_index -= cfg.cells(l);
  }
  throw std::logic_error("unreachable anchor index");
}

}  // namespace ctcn
