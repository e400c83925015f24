#include "ctcn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ctcn/checkpoint.hpp"
#include "json.hpp"

namespace ctcn {

using nlohmann::json;

// ---- configuration ------------------------------------------------------------

void RunConfig::validate() const {
  network.validate();
  const auto& o = optimizer;
  if (!(o.learning_rate >= 0.0) || !(o.momentum >= 0.0 && o.momentum < 1.0) ||
      !(o.weight_decay >= 0.0) || !(o.lr_drop_ratio > 0.0)) {
    throw std::invalid_argument("optimizer rates out of range");
  }
  if (!(o.clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be >= 0");
  if (o.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(loss.negative_ratio > 0.0)) throw std::invalid_argument("negative_ratio must be positive");
  if (!(aug_probability >= 0.0 && aug_probability <= 1.0)) {
    throw std::invalid_argument("aug_probability must be in [0, 1]");
  }
  if (!(nms.sigma > 0.0)) throw std::invalid_argument("nms_sigma must be positive");
}

RunConfig RunConfig::desk_preset() {
  RunConfig cfg;
  cfg.network.stage_potentials = {16, 16, 16, 16};
  cfg.network.pyramid_potentials = 16;
  cfg.loss.normalize_by_positives = true;
  cfg.optimizer.clip_norm = 5.0;
  cfg.optimizer.patience = 20;
  // keep toy actions inside the range the 64-snippet anchor set covers well
  cfg.synth.min_action_snippets = 6;
  return cfg;
}

RunConfig RunConfig::paper_preset() {
  RunConfig cfg;
  auto& n = cfg.network;
  n.input_snippets = 512;
  n.max_scale = 9;
  n.anchors_per_cell = 7;
  n.num_classes = 20;
  n.concepts = 4096;
  n.reduced_concepts = 256;
  n.stage_blocks = {3, 4, 6, 3};
  n.stage_potentials = {16, 16, 32, 32};
  n.pyramid_potentials = 32;
  cfg.optimizer.learning_rate = 0.001;
  cfg.optimizer.batch_size = 16;
  cfg.optimizer.epochs = 300;
  cfg.optimizer.lr_drop_epoch = 201;
  cfg.synth.snippets = 512;
  return cfg;
}

namespace {

std::vector<std::size_t> parse_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" []");
    if (first == std::string::npos) continue;
    out.push_back(std::stoul(item.substr(first)));
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected on/off, got '" + v + "'");
}

struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define CTCN_SIZE(key, expr) \
  Field{key, [](const RunConfig& c) { return json(c.expr); }, \
        [](RunConfig& c, const std::string& v) { c.expr = std::stoull(v); }}
#define CTCN_INT(key, expr) \
  Field{key, [](const RunConfig& c) { return json(c.expr); }, \
        [](RunConfig& c, const std::string& v) { c.expr = std::stoi(v); }}
#define CTCN_REAL(key, expr) \
  Field{key, [](const RunConfig& c) { return json(c.expr); }, \
        [](RunConfig& c, const std::string& v) { c.expr = std::stod(v); }}
#define CTCN_BOOL(key, expr) \
  Field{key, [](const RunConfig& c) { return json(c.expr ? "on" : "off"); }, \
        [](RunConfig& c, const std::string& v) { c.expr = parse_bool(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      CTCN_SIZE("input_snippets", network.input_snippets),
      CTCN_SIZE("concepts", network.concepts),
      CTCN_SIZE("reduced_concepts", network.reduced_concepts),
      CTCN_SIZE("num_classes", network.num_classes),
      CTCN_SIZE("anchors_per_cell", network.anchors_per_cell),
      CTCN_SIZE("stem_width", network.stem_width),
      Field{"stage_blocks", [](const RunConfig& c) { return json(c.network.stage_blocks); },
            [](RunConfig& c, const std::string& v) { c.network.stage_blocks = parse_list(v); }},
      Field{"stage_potentials", [](const RunConfig& c) { return json(c.network.stage_potentials); },
            [](RunConfig& c, const std::string& v) { c.network.stage_potentials = parse_list(v); }},
      CTCN_SIZE("pyramid_potentials", network.pyramid_potentials),
      CTCN_SIZE("head_reduction", network.head_reduction),
      CTCN_INT("min_scale", network.min_scale),
      CTCN_INT("max_scale", network.max_scale),
      Field{"variant", [](const RunConfig& c) { return json(to_string(c.network.variant)); },
            [](RunConfig& c, const std::string& v) { c.network.variant = parse_variant(v); }},
      CTCN_SIZE("groups", network.groups),
      CTCN_REAL("dropout", network.dropout),
      CTCN_REAL("learning_rate", optimizer.learning_rate),
      CTCN_REAL("momentum", optimizer.momentum),
      CTCN_REAL("weight_decay", optimizer.weight_decay),
      CTCN_SIZE("batch_size", optimizer.batch_size),
      CTCN_SIZE("epochs", optimizer.epochs),
      CTCN_SIZE("lr_drop_epoch", optimizer.lr_drop_epoch),
      CTCN_REAL("lr_drop_ratio", optimizer.lr_drop_ratio),
      CTCN_SIZE("patience", optimizer.patience),
      CTCN_REAL("clip_norm", optimizer.clip_norm),
      CTCN_REAL("negative_ratio", loss.negative_ratio),
      CTCN_BOOL("normalize_by_positives", loss.normalize_by_positives),
      CTCN_BOOL("aug_move", aug_move),
      CTCN_BOOL("aug_crop", aug_crop),
      CTCN_REAL("aug_probability", aug_probability),
      CTCN_REAL("nms_sigma", nms.sigma),
      CTCN_REAL("nms_score_floor", nms.score_floor),
      CTCN_REAL("confidence_floor", confidence_floor),
      CTCN_SIZE("max_detections", max_detections),
      CTCN_SIZE("seed", seed),
      CTCN_SIZE("synth_videos", synth.num_videos),
      CTCN_SIZE("synth_min_actions", synth.min_actions),
      CTCN_SIZE("synth_max_actions", synth.max_actions),
      CTCN_SIZE("synth_min_length", synth.min_action_snippets),
      CTCN_SIZE("synth_max_length", synth.max_action_snippets),
      CTCN_REAL("synth_action_noise", synth.action_noise),
      CTCN_REAL("synth_background_noise", synth.background_noise),
  };
  return all;
}

#undef CTCN_SIZE
#undef CTCN_INT
#undef CTCN_REAL
#undef CTCN_BOOL

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "on" : "off";
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + json_scalar(e);
    return out;
  }
  return v.dump();
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) {
  json doc = json::object();
  for (const auto& f : fields()) doc[f.key] = f.get(cfg);
  return doc.dump(1) + "\n";
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      try {
        f.set(cfg, value);
      } catch (const std::logic_error& e) {
        throw std::invalid_argument("bad value '" + value + "' for " + key + ": " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

RunConfig run_config_from_json(const std::string& text, RunConfig base) {
  const json doc = json::parse(text);
  for (const auto& [key, value] : doc.items()) apply_setting(base, key, json_scalar(value));
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  if (trim(text).starts_with("{")) return run_config_from_json(text, std::move(base));
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + line);
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

// ---- training -----------------------------------------------------------------

namespace {

LossBreakdown video_loss(const Network& net, const RunConfig& cfg,
                         std::span<const AnchorSpec> anchors, const LabeledVideo& v, bool train_mode,
                         Rng& rng) {
  const auto out = net.forward(v.features, train_mode, rng);
  const auto match = match_anchors(anchors, v.actions);
  return total_loss(out, net.config().anchors(), net.config().num_classes, anchors, match,
                    v.actions, cfg.loss);
}

}  // namespace

EpochLog evaluate_loss(const Network& net, const RunConfig& cfg, std::span<const LabeledVideo> videos) {
  EpochLog log;
  if (videos.empty()) return log;
  const auto anchors = enumerate_anchors(net.config().anchors());
  Rng unused(0);
  for (const auto& v : videos) {
    const auto l = video_loss(net, cfg, anchors, v, false, unused);
    log.val_cls += l.classification;
    log.val_loc += l.localization;
  }
  log.val_cls /= static_cast<double>(videos.size());
  log.val_loc /= static_cast<double>(videos.size());
  return log;
}

TrainResult train(Network& net, const RunConfig& cfg, std::span<const LabeledVideo> train_set,
                  std::span<const LabeledVideo> val_set, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  const auto anchors = enumerate_anchors(net.config().anchors());
  const auto& opt = cfg.optimizer;
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 1);
  std::bernoulli_distribution apply_aug(cfg.aug_probability);

  auto& params = net.parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.tensor.numel(), 0.0);
  std::vector<std::vector<double>> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    const double lr = opt.learning_rate * (epoch >= opt.lr_drop_epoch ? opt.lr_drop_ratio : 1.0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += opt.batch_size, ++step) {
      for (auto& p : params) p.tensor.zero_grad();
      const std::size_t b1 = std::min(order.size(), b0 + opt.batch_size);
      for (std::size_t i = b0; i < b1; ++i) {
        LabeledVideo v = train_set[order[i]];
        if (cfg.aug_move && apply_aug(rng)) v = random_move(v, rng);
        if (cfg.aug_crop && apply_aug(rng)) v = random_crop(v, rng);
        const auto l = video_loss(net, cfg, anchors, v, true, rng);
        const double value = l.total.item();
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step) + " (video " + v.id + ")",
                              epoch, step);
        }
        (l.total * (1.0 / static_cast<double>(b1 - b0))).backward();
        log.train_cls += l.classification;
        log.train_loc += l.localization;
      }
      double scale = 1.0;
      if (opt.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params)
          if (p.tensor.has_grad())
            for (double g : p.tensor.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
      }
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& t = params[pi].tensor;
        if (!t.has_grad()) continue;
        auto w = t.mutable_data();
        auto g = t.grad();
        auto& vel = velocity[pi];
        for (std::size_t k = 0; k < w.size(); ++k) {
          vel[k] = opt.momentum * vel[k] + scale * g[k] + opt.weight_decay * w[k];
          w[k] -= lr * vel[k];
        }
      }
    }
    log.train_cls /= static_cast<double>(train_set.size());
    log.train_loc /= static_cast<double>(train_set.size());

    if (!val_set.empty()) {
      const auto v = evaluate_loss(net, cfg, val_set);
      log.val_cls = v.val_cls;
      log.val_loc = v.val_loc;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (!val_set.empty() && opt.patience > 0) {
      const double total = log.val_cls + log.val_loc;
      if (total < best_val) {
        best_val = total;
        result.best_epoch = epoch;
        since_best = 0;
        best.clear();
        for (const auto& p : params) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
      } else if (++since_best >= opt.patience) {
        result.early_stopped = true;
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (!best.empty()) {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      std::copy(best[pi].begin(), best[pi].end(), params[pi].tensor.mutable_data().begin());
    }
  }
  for (auto& p : params) p.tensor.zero_grad();
  return result;
}

void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,train_cls,train_loc,val_cls,val_loc\n";
  os.precision(17);
  for (const auto& e : log) {
    os << e.epoch << ',' << e.train_cls << ',' << e.train_loc << ',' << e.val_cls << ','
       << e.val_loc << '\n';
  }
}

// ---- inference ----------------------------------------------------------------

std::vector<Detection> predict(const Network& net, const RunConfig& cfg, const LabeledVideo& video) {
  const auto& ncfg = net.config();
  const auto acfg = ncfg.anchors();
  const auto anchors = enumerate_anchors(acfg);
  const auto out = net.forward(video.features);
  const std::size_t A1 = ncfg.num_classes + 1;
  const Tensor logits = anchor_logits(out, acfg, ncfg.num_classes);
  std::vector<std::size_t> all(anchors.size());
  std::iota(all.begin(), all.end(), 0);
  const Tensor offsets = anchor_offsets(out, acfg, all);
  const auto ld = logits.data();
  const auto od = offsets.data();

  std::vector<Detection> dets;
  for (std::size_t n = 0; n < anchors.size(); ++n) {
    const auto probs = class_confidence(ld.subspan(n * A1, A1));
    for (std::size_t k = 1; k < A1; ++k) {
      if (probs[k] < cfg.confidence_floor) continue;
      const Segment seg = decode(anchors[n], od[2 * n], od[2 * n + 1]);
      if (!(seg.end > seg.start)) continue;
      dets.push_back({video.id, static_cast<int>(k), probs[k], seg});
    }
  }
  dets = soft_nms_per_class(std::move(dets), cfg.nms);
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.label != b.label) return a.label < b.label;
    return a.segment.start < b.segment.start;
  });
  if (dets.size() > cfg.max_detections) dets.resize(cfg.max_detections);
  return dets;
}

std::vector<Detection> predict(const Network& net, const RunConfig& cfg,
                               std::span<const LabeledVideo> videos) {
  std::vector<Detection> out;
  for (const auto& v : videos) {
    auto d = predict(net, cfg, v);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

// ---- evaluation ---------------------------------------------------------------

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "thumos") return EvalMode::Thumos;
  if (s == "activitynet") return EvalMode::ActivityNet;
  throw std::invalid_argument("unknown evaluation mode '" + s + "' (expected thumos or activitynet)");
}

std::vector<double> thresholds_for(EvalMode mode) {
  return mode == EvalMode::Thumos ? kThumosThresholds : activitynet_thresholds();
}

EvalReport evaluate(std::span<const Detection> dets, const AnnotationFile& truth, EvalMode mode,
                    std::span<const double> an_grid) {
  std::set<std::string> known;
  std::vector<std::string> videos;
  for (const auto& v : truth.videos) {
    known.insert(v.id);
    videos.push_back(v.id);
  }
  std::set<std::string> unknown;
  for (const auto& d : dets)
    if (!known.count(d.video_id)) unknown.insert(d.video_id);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw std::invalid_argument("detections reference unknown videos: " + list);
  }
  const auto gts = instances(truth);
  const auto thresholds = thresholds_for(mode);
  EvalReport report = map_report(dets, gts, thresholds, truth.num_classes);
  report.ar_an = ar_an_curve(dets, gts, videos, an_grid, activitynet_thresholds());
  return report;
}

std::string report_to_json(const EvalReport& r) {
  json ap = json::array();
  for (const auto& row : r.ap) {
    json jr = json::array();
    for (const auto& v : row) jr.push_back(v ? json(*v) : json(nullptr));
    ap.push_back(jr);
  }
  json an = json::array(), ar = json::array();
  for (const auto& p : r.ar_an) {
    an.push_back(p.average_number);
    ar.push_back(p.average_recall);
  }
  json doc{{"thresholds", r.thresholds}, {"ap", ap},          {"map", r.map},
           {"mean_map", r.mean_map},     {"ar_an", {{"an", an}, {"ar", ar}}}};
  return doc.dump(1) + "\n";
}

std::string ar_an_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "an,ar\n";
  for (const auto& p : r.ar_an) os << p.average_number << ',' << p.average_recall << '\n';
  return os.str();
}

// ---- persistence --------------------------------------------------------------

void save_model(const std::filesystem::path& path, const Network& net, const RunConfig& cfg) {
  save_checkpoint(path, net.parameters());
  std::ofstream os(path.string() + ".json");
  if (!os) throw std::runtime_error("cannot write " + path.string() + ".json");
  os << config_to_json(cfg);
}

std::pair<Network, RunConfig> load_model(const std::filesystem::path& path) {
  const std::filesystem::path sidecar = path.string() + ".json";
  RunConfig cfg = load_run_config(sidecar);
  Network net(cfg.network, cfg.seed);
  const auto stored = load_checkpoint(path);
  assign_parameters(net.parameters(), stored);
  return {std::move(net), std::move(cfg)};
}

}  // namespace ctcn
