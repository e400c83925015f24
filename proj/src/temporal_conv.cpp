#include "ctcn/temporal_conv.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctcn {

namespace {

struct ConvGeometry {
  std::size_t groups;
  std::size_t in_per_group;
  std::size_t out_per_group;
  std::size_t batch;  // concepts for the concept-wise family, 1 otherwise
  std::size_t t_in;
  std::size_t t_out;
  std::size_t width;
  std::size_t stride;
  std::size_t pad;
};

void check_bank(const FilterBank& bank) {
  if (bank.weight.rank() != 3) {
    throw std::invalid_argument("filter weights must be [out, in, width], got " +
                                shape_str(bank.weight.shape()));
  }
  if (bank.bias.numel() != bank.out()) {
    throw std::invalid_argument("bias of shape " + shape_str(bank.bias.shape()) + " for " +
                                std::to_string(bank.out()) + " outputs");
  }
  if (bank.width() % 2 == 0) {
    throw std::invalid_argument("kernel width must be odd, got " + std::to_string(bank.width()));
  }
}

// Input layout [groups*in_per_group, batch, t_in]; output
// [groups*out_per_group, batch, t_out].
Tensor conv_kernel(const Tensor& x, std::span<const FilterBank> banks, const ConvGeometry& g,
                   Shape out_shape) {
  const auto xd = x.data();
  const std::size_t in_ch_stride = g.batch * g.t_in;
  const std::size_t out_ch_stride = g.batch * g.t_out;
  std::vector<double> out(g.groups * g.out_per_group * out_ch_stride);

  for (std::size_t gi = 0; gi < g.groups; ++gi) {
    const auto w = banks[gi].weight.data();
    const auto b = banks[gi].bias.data();
    for (std::size_t o = 0; o < g.out_per_group; ++o) {
      double* orow = out.data() + (gi * g.out_per_group + o) * out_ch_stride;
      for (std::size_t n = 0; n < out_ch_stride; ++n) orow[n] = b[o];
      for (std::size_t i = 0; i < g.in_per_group; ++i) {
        const double* irow = xd.data() + (gi * g.in_per_group + i) * in_ch_stride;
        const double* wk = w.data() + (o * g.in_per_group + i) * g.width;
        for (std::size_t bt = 0; bt < g.batch; ++bt) {
          const double* src = irow + bt * g.t_in;
          double* dst = orow + bt * g.t_out;
          for (std::size_t j = 0; j < g.t_out; ++j) {
            double acc = 0.0;
            for (std::size_t d = 0; d < g.width; ++d) {
              const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j * g.stride + d) -
                                       static_cast<std::ptrdiff_t>(g.pad);
              if (s >= 0 && s < static_cast<std::ptrdiff_t>(g.t_in)) acc += wk[d] * src[s];
            }
            dst[j] += acc;
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{x};
  for (const auto& bank : banks) {
    inputs.push_back(bank.weight);
    inputs.push_back(bank.bias);
  }
  std::vector<FilterBank> kept(banks.begin(), banks.end());
  return Tensor::from_op(
      std::move(out_shape), std::move(out), std::move(inputs),
      [x, kept = std::move(kept), g](std::span<const double> gout,
                                     std::span<const std::span<double>> gin) {
        const auto xd = x.data();
        const std::size_t in_ch_stride = g.batch * g.t_in;
        const std::size_t out_ch_stride = g.batch * g.t_out;
        const auto& gx = gin[0];
        for (std::size_t gi = 0; gi < g.groups; ++gi) {
          const auto w = kept[gi].weight.data();
          const auto& gw = gin[1 + 2 * gi];
          const auto& gb = gin[2 + 2 * gi];
          for (std::size_t o = 0; o < g.out_per_group; ++o) {
            const double* grow = gout.data() + (gi * g.out_per_group + o) * out_ch_stride;
            if (!gb.empty()) {
              double s = 0.0;
              for (std::size_t n = 0; n < out_ch_stride; ++n) s += grow[n];
              gb[o] += s;
            }
            for (std::size_t i = 0; i < g.in_per_group; ++i) {
              const std::size_t in_ch = gi * g.in_per_group + i;
              const double* irow = xd.data() + in_ch * in_ch_stride;
              const std::size_t wbase = (o * g.in_per_group + i) * g.width;
              for (std::size_t bt = 0; bt < g.batch; ++bt) {
                for (std::size_t j = 0; j < g.t_out; ++j) {
                  const double go = grow[bt * g.t_out + j];
                  if (go == 0.0) continue;
                  for (std::size_t d = 0; d < g.width; ++d) {
                    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j * g.stride + d) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    if (s < 0 || s >= static_cast<std::ptrdiff_t>(g.t_in)) continue;
                    const std::size_t xi = in_ch * in_ch_stride + bt * g.t_in + s;
                    if (!gw.empty()) gw[wbase + d] += go * irow[bt * g.t_in + s];
                    if (!gx.empty()) gx[xi] += go * w[wbase + d];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor concept_conv_raw(const Tensor& x, const FilterBank& bank, std::size_t stride) {
  check_bank(bank);
  if (x.rank() != 3) {
    throw std::invalid_argument("concept-wise conv expects [k, c, t], got " + shape_str(x.shape()));
  }
  if (bank.in() != x.extent(0)) {
    throw std::invalid_argument("potential-count mismatch: bank reads " + std::to_string(bank.in()) +
                                " potentials, input has " + std::to_string(x.extent(0)));
  }
  if (stride == 0) throw std::invalid_argument("stride must be >= 1");
  const ConvGeometry g{1,         bank.in(),   bank.out(), x.extent(1),          x.extent(2),
                       strided_length(x.extent(2), stride), bank.width(), stride, (bank.width() - 1) / 2};
  return conv_kernel(x, std::span(&bank, 1), g, {bank.out(), x.extent(1), g.t_out});
}

Tensor grouped_conv_raw(const Tensor& x, std::span<const FilterBank> banks, std::size_t stride) {
  if (x.rank() != 2) {
    throw std::invalid_argument("temporal conv expects [c, t], got " + shape_str(x.shape()));
  }
  if (banks.empty()) throw std::invalid_argument("need at least one filter bank");
  if (stride == 0) throw std::invalid_argument("stride must be >= 1");
  const std::size_t groups = banks.size();
  const std::size_t c = x.extent(0);
  if (c % groups != 0) {
    throw std::invalid_argument(std::to_string(groups) + " groups do not divide " +
                                std::to_string(c) + " input channels");
  }
  for (const auto& b : banks) {
    check_bank(b);
    if (b.in() != c / groups || b.out() != banks[0].out() || b.width() != banks[0].width()) {
      throw std::invalid_argument("group filter bank " + shape_str(b.weight.shape()) +
                                  " does not fit " + std::to_string(c / groups) +
                                  " channels per group");
    }
  }
  const ConvGeometry g{groups,      c / groups,   banks[0].out(), 1, x.extent(1),
                       strided_length(x.extent(1), stride), banks[0].width(), stride,
                       (banks[0].width() - 1) / 2};
  return conv_kernel(x, banks, g, {groups * g.out_per_group, g.t_out});
}

}  // namespace

FeatureSequence::FeatureSequence(Tensor v) : values(std::move(v)) {
  if (values.rank() != 2) {
    throw std::invalid_argument("feature sequence must be [c, t], got " + shape_str(values.shape()));
  }
}

PotentialMap::PotentialMap(Tensor v) : values(std::move(v)) {
  if (values.rank() != 3) {
    throw std::invalid_argument("potential map must be [k, c, t], got " + shape_str(values.shape()));
  }
}

PotentialMap PotentialMap::embed(const FeatureSequence& x) {
  return PotentialMap(reshape(x.values, {1, x.concepts(), x.snippets()}));
}

FilterBank FilterBank::kaiming(std::size_t out, std::size_t in, std::size_t width, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in * width)));
  std::vector<double> w(out * in * width);
  for (auto& v : w) v = normal(rng);
  return {Tensor::parameter({out, in, width}, std::move(w)),
          Tensor::parameter({out}, std::vector<double>(out, 0.0))};
}

FilterBank FilterBank::zeros(std::size_t out, std::size_t in, std::size_t width) {
  return {Tensor::parameter({out, in, width}, std::vector<double>(out * in * width, 0.0)),
          Tensor::parameter({out}, std::vector<double>(out, 0.0))};
}

std::size_t strided_length(std::size_t t, std::size_t stride) { return (t + stride - 1) / stride; }

FeatureSequence standard_temporal_conv(const FeatureSequence& x, const FilterBank& bank,
                                       std::size_t stride) {
  check_bank(bank);
  if (bank.in() != x.concepts()) {
    throw std::invalid_argument("filter bank reads " + std::to_string(bank.in()) +
                                " channels, input has " + std::to_string(x.concepts()));
  }
  return FeatureSequence(grouped_conv_raw(x.values, std::span(&bank, 1), stride));
}

FeatureSequence group_temporal_conv(const FeatureSequence& x, std::span<const FilterBank> groups,
                                    std::size_t stride) {
  return FeatureSequence(grouped_conv_raw(x.values, groups, stride));
}

PotentialMap ctc_conv(const PotentialMap& x, const CtcFilterBank& bank, std::size_t stride) {
  return PotentialMap(concept_conv_raw(x.values, bank, stride));
}

PotentialMap ctc_residual_block(const PotentialMap& x, const CtcFilterBank& first,
                                const CtcFilterBank& second, const CtcFilterBank* downsample,
                                std::size_t stride) {
  TemporalConv a{ConvFamily::Concept, stride, {first}};
  TemporalConv b{ConvFamily::Concept, 1, {second}};
  if (downsample) {
    TemporalConv s{ConvFamily::Concept, stride, {*downsample}};
    return PotentialMap(residual_block(x.values, a, b, &s));
  }
  return PotentialMap(residual_block(x.values, a, b, nullptr));
}

Tensor TemporalConv::operator()(const Tensor& x) const {
  switch (family) {
    case ConvFamily::Concept:
      if (banks.size() != 1) throw std::logic_error("concept-wise conv takes one bank");
      return concept_conv_raw(x, banks[0], stride);
    case ConvFamily::Standard:
      if (banks.size() != 1) throw std::logic_error("standard conv takes one bank");
      [[fallthrough]];
    case ConvFamily::Group:
      return grouped_conv_raw(x, banks, stride);
  }
  throw std::logic_error("unknown conv family");
}

std::size_t TemporalConv::in_width() const { return banks.front().in() * (family == ConvFamily::Group ? banks.size() : 1); }
std::size_t TemporalConv::out_width() const { return banks.front().out() * banks.size(); }

std::size_t TemporalConv::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : banks) n += b.parameter_count();
  return n;
}

TemporalConv TemporalConv::make(ConvFamily family, std::size_t in_width, std::size_t out_width,
                                std::size_t kernel, std::size_t stride, std::size_t groups,
                                Rng& rng) {
  TemporalConv conv;
  conv.family = family;
  conv.stride = stride;
  if (family == ConvFamily::Group) {
    if (groups == 0 || in_width % groups != 0 || out_width % groups != 0) {
      throw std::invalid_argument(std::to_string(groups) + " groups do not divide widths " +
                                  std::to_string(in_width) + " -> " + std::to_string(out_width));
    }
    for (std::size_t g = 0; g < groups; ++g) {
      conv.banks.push_back(FilterBank::kaiming(out_width / groups, in_width / groups, kernel, rng));
    }
  } else {
    conv.banks.push_back(FilterBank::kaiming(out_width, in_width, kernel, rng));
  }
  return conv;
}

Tensor residual_block(const Tensor& x, const TemporalConv& first, const TemporalConv& second,
                      const TemporalConv* shortcut) {
  Tensor branch = second(relu(first(x)));
  Tensor skip = shortcut ? (*shortcut)(x) : x;
  if (branch.shape() != skip.shape()) {
    throw std::invalid_argument("residual branch " + shape_str(branch.shape()) +
                                " does not match shortcut " + shape_str(skip.shape()) +
                                (shortcut ? "" : "; a downsample bank is required"));
  }
  return relu(branch + skip);
}

}  // namespace ctcn
