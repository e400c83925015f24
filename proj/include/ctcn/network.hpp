#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctcn/anchors.hpp"
#include "ctcn/temporal_conv.hpp"
#include "ctcn/tensor.hpp"

namespace ctcn {

enum class Variant { Ctcn, Tcn, GroupTcn };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct NetworkConfig {
  std::size_t input_snippets = 64;
  std::size_t concepts = 16;
  std::size_t reduced_concepts = 0;  // learned linear input projection; 0 = none
  std::size_t num_classes = 3;
  std::size_t anchors_per_cell = 2;
  std::size_t stem_width = 7;
  std::vector<std::size_t> stage_blocks{1, 1, 1, 1};
  std::vector<std::size_t> stage_potentials{8, 8, 8, 8};
  std::size_t pyramid_potentials = 8;
  std::size_t head_reduction = 2;
  int min_scale = 2;
  int max_scale = 6;
  Variant variant = Variant::Ctcn;
  std::size_t groups = 4;  // GroupTcn only
  double dropout = 0.5;

  void validate() const;
  AnchorConfig anchors() const;
  /// Concept count after the optional input projection.
  std::size_t working_concepts() const;
  /// Convolution layers on the longest path: stem, residual blocks and the
  /// head hidden layer.
  std::size_t depth() const;
};

struct ScaleOutput {
  int scale = 0;
  Tensor cls;  // [(A+1)*M, cells]; channel k*M + (m-1) is class k of anchor m
  Tensor reg;  // [2*M, cells]; channel m-1 is the length offset, M + m-1 the center offset
};

struct PyramidOutputs {
  std::vector<ScaleOutput> scales;  // ordered from min_scale to max_scale
};

struct LayerSummary {
  std::string name;
  Shape output;
  std::size_t parameters = 0;
};

/// Doubles the temporal (last) axis by repeating every value.
Tensor upsample_nearest2x(const Tensor& x);

/// Nearest-neighbor x2 upsample of `coarse` plus the projected lateral map.
Tensor top_down_merge(const Tensor& coarse, const Tensor& lateral, const TemporalConv& projection);

class Network {
 public:
  Network(NetworkConfig cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }

  PyramidOutputs forward(const FeatureSequence& x, bool train_mode, Rng& rng) const;
  /// Eval-mode forward (no dropout).
  PyramidOutputs forward(const FeatureSequence& x) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  const std::vector<LayerSummary>& summary() const { return summary_; }

  /// Channel widths of every convolution in build order.
  std::vector<std::size_t> layer_widths() const;

  /// Zeroes both prediction layers (weights and biases).
  void zero_prediction_layers();

 private:
  struct Block {
    TemporalConv first, second;
    std::optional<TemporalConv> shortcut;
  };
  struct Linear {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
  };
  struct Head {
    TemporalConv hidden;
    Linear predict;
  };

  Tensor apply_head(const Head& head, const Tensor& p) const;
  void register_conv(const std::string& name, const TemporalConv& conv, Shape out);
  void register_linear(const std::string& name, const Linear& lin, Shape out);

  NetworkConfig cfg_;
  ConvFamily family_;
  std::optional<Linear> input_projection_;
  std::vector<TemporalConv> stem_;
  std::vector<std::vector<Block>> stages_;  // C2..C5
  std::vector<TemporalConv> laterals_;      // per stage, to pyramid width
  std::vector<TemporalConv> smoothing_;     // P2..P4 after merge
  std::vector<TemporalConv> extra_;         // P6..P_max
  Head cls_head_, reg_head_;
  std::vector<Parameter> params_;
  std::vector<LayerSummary> summary_;
};

}  // namespace ctcn
