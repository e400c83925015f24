#include "ctcn/network.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctcn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Ctcn: return "ctcn";
    case Variant::Tcn: return "tcn";
    case Variant::GroupTcn: return "group_tcn";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "ctcn") return Variant::Ctcn;
  if (s == "tcn") return Variant::Tcn;
  if (s == "group_tcn" || s == "group-tcn") return Variant::GroupTcn;
  throw std::invalid_argument("unknown variant '" + s + "' (expected ctcn, tcn or group_tcn)");
}

void NetworkConfig::validate() const {
  if (max_scale < 5 || min_scale < 2 || min_scale > 5) {
    throw std::invalid_argument("pyramid scales must satisfy 2 <= min_scale <= 5 <= max_scale, got P" +
                                std::to_string(min_scale) + "..P" + std::to_string(max_scale));
  }
  const std::size_t minimum = std::size_t{1} << max_scale;
  if (input_snippets < minimum) {
    throw std::invalid_argument("input_snippets " + std::to_string(input_snippets) +
                                " too small for scales up to P" + std::to_string(max_scale) +
                                "; minimum t0 is " + std::to_string(minimum));
  }
  anchors().validate();
  if (concepts == 0 || num_classes == 0 || anchors_per_cell == 0) {
    throw std::invalid_argument("concepts, num_classes and anchors_per_cell must be >= 1");
  }
  if (stem_width % 2 == 0) throw std::invalid_argument("stem_width must be odd");
  if (stage_blocks.size() != 4 || stage_potentials.size() != 4) {
    throw std::invalid_argument("need exactly 4 backbone stages (C2..C5)");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (stage_blocks[i] == 0 || stage_potentials[i] == 0) {
      throw std::invalid_argument("stage block counts and widths must be >= 1");
    }
  }
  if (pyramid_potentials == 0 || head_reduction == 0) {
    throw std::invalid_argument("pyramid_potentials and head_reduction must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  const std::size_t c = working_concepts();
  if (variant != Variant::Ctcn && c / head_reduction == 0) {
    throw std::invalid_argument("head_reduction leaves no hidden channels");
  }
  if (variant == Variant::GroupTcn) {
    if (groups == 0 || c % groups != 0 || (c / head_reduction) % groups != 0) {
      throw std::invalid_argument(std::to_string(groups) + " groups must divide " +
                                  std::to_string(c) + " channels and the " +
                                  std::to_string(c / head_reduction) + " head channels");
    }
  }
}

AnchorConfig NetworkConfig::anchors() const {
  return {input_snippets, min_scale, max_scale, anchors_per_cell};
}

std::size_t NetworkConfig::working_concepts() const {
  return reduced_concepts > 0 ? reduced_concepts : concepts;
}

std::size_t NetworkConfig::depth() const {
  return 2 + 2 * std::accumulate(stage_blocks.begin(), stage_blocks.end(), std::size_t{0}) + 2;
}

Tensor upsample_nearest2x(const Tensor& x) {
  const std::size_t t = x.shape().back();
  const std::size_t rows = x.numel() / t;
  Shape shape = x.shape();
  shape.back() = 2 * t;
  auto xd = x.data();
  std::vector<double> out(2 * x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < t; ++j) {
      out[r * 2 * t + 2 * j] = xd[r * t + j];
      out[r * 2 * t + 2 * j + 1] = xd[r * t + j];
    }
  return Tensor::from_op(std::move(shape), std::move(out), {x},
                         [rows, t](std::span<const double> g, std::span<const std::span<double>> gi) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < t; ++j)
                               gi[0][r * t + j] += g[r * 2 * t + 2 * j] + g[r * 2 * t + 2 * j + 1];
                         });
}

Tensor top_down_merge(const Tensor& coarse, const Tensor& lateral, const TemporalConv& projection) {
  if (lateral.shape().back() != 2 * coarse.shape().back()) {
    throw std::invalid_argument("top-down merge needs a 2:1 length ratio, got lateral " +
                                shape_str(lateral.shape()) + " and coarse " +
                                shape_str(coarse.shape()));
  }
  Tensor projected = projection(lateral);
  Tensor up = upsample_nearest2x(coarse);
  if (projected.shape() != up.shape()) {
    throw std::invalid_argument("projected lateral " + shape_str(projected.shape()) +
                                " does not match upsampled coarse map " + shape_str(up.shape()));
  }
  return up + projected;
}

namespace {

Shape map_shape(ConvFamily family, std::size_t width, std::size_t concepts, std::size_t t) {
  if (family == ConvFamily::Concept) return {width, concepts, t};
  return {width, t};
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? scale : 0.0;
  return x * Tensor(x.shape(), std::move(mask));
}

}  // namespace

Network::Network(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const bool concept_wise = cfg_.variant == Variant::Ctcn;
  family_ = concept_wise ? ConvFamily::Concept
            : cfg_.variant == Variant::Tcn ? ConvFamily::Standard
                                           : ConvFamily::Group;
  const std::size_t groups = cfg_.variant == Variant::GroupTcn ? cfg_.groups : 1;
  const std::size_t c = cfg_.working_concepts();
  std::size_t t = cfg_.input_snippets;

  auto make = [&](std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride) {
    return TemporalConv::make(family_, in, out, kernel, stride, groups, rng);
  };
  auto width_of = [&](std::size_t potentials) { return concept_wise ? potentials : c; };

  if (cfg_.reduced_concepts > 0) {
    std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(cfg_.concepts)));
    std::vector<double> w(c * cfg_.concepts);
    for (auto& v : w) v = normal(rng);
    input_projection_ = Linear{Tensor::parameter({c, cfg_.concepts}, std::move(w)),
                               Tensor::parameter({c}, std::vector<double>(c, 0.0))};
    register_linear("input", *input_projection_, {c, t});
  }

  std::size_t width = concept_wise ? 1 : c;
  for (std::size_t i = 0; i < 2; ++i) {
    stem_.push_back(make(width, width_of(cfg_.stage_potentials[0]), cfg_.stem_width, 2));
    width = width_of(cfg_.stage_potentials[0]);
    t = strided_length(t, 2);
    register_conv("stem." + std::to_string(i), stem_.back(), map_shape(family_, width, c, t));
  }

  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<Block> blocks;
    const std::size_t out = width_of(cfg_.stage_potentials[s]);
    for (std::size_t b = 0; b < cfg_.stage_blocks[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      Block block{make(width, out, 3, stride), make(out, out, 3, 1), std::nullopt};
      if (stride != 1 || width != out) block.shortcut = make(width, out, 1, stride);
      t = strided_length(t, stride);
      const std::string name = "C" + std::to_string(s + 2) + ".block" + std::to_string(b);
      register_conv(name + ".conv1", block.first, map_shape(family_, out, c, t));
      register_conv(name + ".conv2", block.second, map_shape(family_, out, c, t));
      if (block.shortcut) register_conv(name + ".shortcut", *block.shortcut, map_shape(family_, out, c, t));
      blocks.push_back(std::move(block));
      width = out;
    }
    stages_.push_back(std::move(blocks));
  }

  const std::size_t pyr = width_of(cfg_.pyramid_potentials);
  for (std::size_t s = 0; s < 4; ++s) {
    laterals_.push_back(make(width_of(cfg_.stage_potentials[s]), pyr, 1, 1));
    register_conv("lateral" + std::to_string(s + 2), laterals_.back(),
                  map_shape(family_, pyr, c, cfg_.input_snippets >> (s + 2)));
  }
  for (int l = 2; l <= 4; ++l) {
    smoothing_.push_back(make(pyr, pyr, 3, 1));
    register_conv("P" + std::to_string(l) + ".smooth", smoothing_.back(),
                  map_shape(family_, pyr, c, cfg_.input_snippets >> l));
  }
  for (int l = 6; l <= cfg_.max_scale; ++l) {
    const std::size_t in = l == 6 ? width_of(cfg_.stage_potentials[3]) : pyr;
    extra_.push_back(make(in, pyr, 3, 2));
    register_conv("P" + std::to_string(l), extra_.back(),
                  map_shape(family_, pyr, c, cfg_.input_snippets >> l));
  }

  const std::size_t hidden = concept_wise ? std::max<std::size_t>(1, pyr / cfg_.head_reduction)
                                          : c / cfg_.head_reduction;
  const std::size_t features = concept_wise ? hidden * c : hidden;
  const std::size_t A1 = cfg_.num_classes + 1;
  const std::size_t M = cfg_.anchors_per_cell;
  auto make_head = [&](std::size_t outputs) {
    std::normal_distribution<double> normal(0.0, 0.01);
    std::vector<double> w(outputs * features);
    for (auto& v : w) v = normal(rng);
    return Head{make(pyr, hidden, 3, 1),
                Linear{Tensor::parameter({outputs, features}, std::move(w)),
                       Tensor::parameter({outputs}, std::vector<double>(outputs, 0.0))}};
  };
  cls_head_ = make_head(A1 * M);
  reg_head_ = make_head(2 * M);
  const std::size_t finest = cfg_.input_snippets >> cfg_.min_scale;
  register_conv("cls_head.hidden", cls_head_.hidden, map_shape(family_, hidden, c, finest));
  register_linear("cls_head.predict", cls_head_.predict, {A1 * M, finest});
  register_conv("reg_head.hidden", reg_head_.hidden, map_shape(family_, hidden, c, finest));
  register_linear("reg_head.predict", reg_head_.predict, {2 * M, finest});
}

void Network::register_conv(const std::string& name, const TemporalConv& conv, Shape out) {
  for (std::size_t g = 0; g < conv.banks.size(); ++g) {
    const std::string prefix = conv.banks.size() > 1 ? name + ".g" + std::to_string(g) : name;
    params_.push_back({prefix + ".weight", conv.banks[g].weight});
    params_.push_back({prefix + ".bias", conv.banks[g].bias});
  }
  summary_.push_back({name, std::move(out), conv.parameter_count()});
}

void Network::register_linear(const std::string& name, const Linear& lin, Shape out) {
  params_.push_back({name + ".weight", lin.weight});
  params_.push_back({name + ".bias", lin.bias});
  summary_.push_back({name, std::move(out), lin.weight.numel() + lin.bias.numel()});
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::vector<std::size_t> Network::layer_widths() const {
  std::vector<std::size_t> out;
  for (const auto& s : summary_) out.push_back(s.output.front());
  return out;
}

void Network::zero_prediction_layers() {
  for (Linear* lin : {&cls_head_.predict, &reg_head_.predict}) {
    for (auto& v : lin->weight.mutable_data()) v = 0.0;
    for (auto& v : lin->bias.mutable_data()) v = 0.0;
  }
}

Tensor Network::apply_head(const Head& head, const Tensor& p) const {
  Tensor h = relu(head.hidden(p));
  const std::size_t t = h.shape().back();
  Tensor flat = reshape(h, {h.numel() / t, t});
  return add_leading_bias(matmul(head.predict.weight, flat), head.predict.bias);
}

PyramidOutputs Network::forward(const FeatureSequence& x) const {
  Rng unused(0);
  return forward(x, false, unused);
}

PyramidOutputs Network::forward(const FeatureSequence& x, bool train_mode, Rng& rng) const {
  if (x.snippets() != cfg_.input_snippets) {
    throw std::invalid_argument("expected " + std::to_string(cfg_.input_snippets) +
                                " snippets, got " + std::to_string(x.snippets()));
  }
  if (x.concepts() != cfg_.concepts) {
    throw std::invalid_argument("expected " + std::to_string(cfg_.concepts) + " concepts, got " +
                                std::to_string(x.concepts()));
  }
  Tensor h = x.values;
  if (input_projection_) {
    h = add_leading_bias(matmul(input_projection_->weight, h), input_projection_->bias);
  }
  if (family_ == ConvFamily::Concept) h = reshape(h, {1, h.extent(0), h.extent(1)});
  for (const auto& conv : stem_) h = relu(conv(h));

  std::vector<Tensor> c_maps;
  for (const auto& stage : stages_) {
    for (const auto& block : stage) {
      h = residual_block(h, block.first, block.second,
                         block.shortcut ? &*block.shortcut : nullptr);
    }
    c_maps.push_back(h);
  }

  std::vector<Tensor> pyramid(static_cast<std::size_t>(cfg_.max_scale + 1));
  pyramid[5] = laterals_[3](c_maps[3]);
  for (int l = 4; l >= cfg_.min_scale; --l) {
    const auto i = static_cast<std::size_t>(l - 2);
    pyramid[l] = smoothing_[i](top_down_merge(pyramid[l + 1], c_maps[i], laterals_[i]));
  }
  for (int l = 6; l <= cfg_.max_scale; ++l) {
    const Tensor& prev = l == 6 ? c_maps[3] : pyramid[l - 1];
    pyramid[l] = extra_[static_cast<std::size_t>(l - 6)](l == 6 ? prev : relu(prev));
  }

  PyramidOutputs out;
  for (int l = cfg_.min_scale; l <= cfg_.max_scale; ++l) {
    Tensor p = pyramid[static_cast<std::size_t>(l)];
    if (train_mode) p = dropout(p, cfg_.dropout, rng);
    out.scales.push_back({l, apply_head(cls_head_, p), apply_head(reg_head_, p)});
  }
  return out;
}

}  // namespace ctcn
