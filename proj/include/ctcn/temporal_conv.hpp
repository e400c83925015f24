#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ctcn/tensor.hpp"

namespace ctcn {

using Rng = std::mt19937_64;

/// c x t snippet features: one row per concept.
struct FeatureSequence {
  Tensor values;

  FeatureSequence() = default;
  explicit FeatureSequence(Tensor v);

  std::size_t concepts() const { return values.extent(0); }
  std::size_t snippets() const { return values.extent(1); }
};

/// k x c x t map (potential x concept x snippet).
struct PotentialMap {
  Tensor values;

  PotentialMap() = default;
  explicit PotentialMap(Tensor v);
  /// A feature sequence is a potential map with a single potential.
  static PotentialMap embed(const FeatureSequence& x);

  std::size_t potentials() const { return values.extent(0); }
  std::size_t concepts() const { return values.extent(1); }
  std::size_t snippets() const { return values.extent(2); }
};

/// Temporal filters [out, in, width] plus one bias per output.
/// For concept-wise convolution in/out count potentials and the same bank is
/// applied to every concept, so its size does not depend on c.
struct FilterBank {
  Tensor weight;
  Tensor bias;

  std::size_t out() const { return weight.extent(0); }
  std::size_t in() const { return weight.extent(1); }
  std::size_t width() const { return weight.extent(2); }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }

  /// Fan-in scaled normal weights, zero bias.
  static FilterBank kaiming(std::size_t out, std::size_t in, std::size_t width, Rng& rng);
  static FilterBank zeros(std::size_t out, std::size_t in, std::size_t width);
};

using CtcFilterBank = FilterBank;

/// ceil(t / stride)
std::size_t strided_length(std::size_t t, std::size_t stride);

// Zero "same" padding of (w-1)/2 on each side; output j reads the window
// centered on input j*stride. Kernel widths must be odd.

FeatureSequence standard_temporal_conv(const FeatureSequence& x, const FilterBank& bank,
                                       std::size_t stride);

/// Group g reads input channels [g*c/G, (g+1)*c/G) and writes output channels
/// [g*k, (g+1)*k) with its own bank.
FeatureSequence group_temporal_conv(const FeatureSequence& x, std::span<const FilterBank> groups,
                                    std::size_t stride);

/// Concept-wise temporal convolution: a 1 x w kernel over every concept row,
/// mixing potentials only, with the bank shared across concepts.
PotentialMap ctc_conv(const PotentialMap& x, const CtcFilterBank& bank, std::size_t stride);

/// relu(second(relu(first(x))) + shortcut(x)); the shortcut is the identity
/// unless a downsample bank is given.
PotentialMap ctc_residual_block(const PotentialMap& x, const CtcFilterBank& first,
                                const CtcFilterBank& second, const CtcFilterBank* downsample,
                                std::size_t stride);

// ---- operator families used to assemble networks ---------------------------

enum class ConvFamily { Concept, Standard, Group };

/// One convolution layer of any of the three families, operating on raw
/// tensors: [k, c, t] for Concept, [channels, t] for Standard and Group.
struct TemporalConv {
  ConvFamily family = ConvFamily::Concept;
  std::size_t stride = 1;
  std::vector<FilterBank> banks;  // one per group; a single bank otherwise

  Tensor operator()(const Tensor& x) const;

  std::size_t in_width() const;
  std::size_t out_width() const;
  std::size_t kernel() const { return banks.front().width(); }
  std::size_t parameter_count() const;

  static TemporalConv make(ConvFamily family, std::size_t in_width, std::size_t out_width,
                           std::size_t kernel, std::size_t stride, std::size_t groups, Rng& rng);
};

Tensor residual_block(const Tensor& x, const TemporalConv& first, const TemporalConv& second,
                      const TemporalConv* shortcut);

}  // namespace ctcn
