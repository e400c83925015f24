#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctcn/data.hpp"
#include "ctcn/eval.hpp"
#include "ctcn/network.hpp"
#include "ctcn/targets.hpp"

namespace ctcn {

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 60;
  std::size_t lr_drop_epoch = 45;  // 1-based epoch from which the dropped rate applies
  double lr_drop_ratio = 0.1;
  std::size_t patience = 10;       // validation epochs without improvement; 0 disables
  double clip_norm = 0.0;          // global gradient-norm clip per step; 0 disables
};

struct RunConfig {
  NetworkConfig network;
  OptimizerConfig optimizer;
  LossConfig loss;
  bool aug_move = true;
  bool aug_crop = true;
  double aug_probability = 0.5;  // chance of applying each enabled augmentation
  SoftNmsOptions nms;
  double confidence_floor = 0.05;
  std::size_t max_detections = 100;  // per video, after Soft-NMS
  std::uint64_t seed = 1;
  SyntheticSpec synth;

  void validate() const;

  /// Small CPU-friendly setting used by the tests.
  static RunConfig desk_preset();
  /// The published THUMOS'14 schedule and geometry (t0 = 512, P2..P9).
  static RunConfig paper_preset();
};

std::string config_to_json(const RunConfig& cfg);
/// Applies key=value settings (see README for the keys). Unknown keys throw.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
/// Reads a JSON object or key=value lines (# comments allowed).
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = RunConfig::desk_preset());
RunConfig run_config_from_json(const std::string& text, RunConfig base = RunConfig::desk_preset());

struct EpochLog {
  std::size_t epoch = 0;
  double train_cls = 0.0;
  double train_loc = 0.0;
  double val_cls = 0.0;
  double val_loc = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t step)
      : std::runtime_error(what), epoch(epoch), step(step) {}
  std::size_t epoch;
  std::size_t step;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mean per-video classification and localization loss in eval mode.
EpochLog evaluate_loss(const Network& net, const RunConfig& cfg, std::span<const LabeledVideo> videos);

/// Mini-batch SGD with momentum and weight decay on the batch mean of the
/// per-video objective.
/// With patience > 0 the parameters of the best validation epoch are
/// restored when training ends.
TrainResult train(Network& net, const RunConfig& cfg, std::span<const LabeledVideo> train_set,
                  std::span<const LabeledVideo> val_set, const EpochCallback& on_epoch = {});

void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> log);

/// Eval-mode forward, per-anchor softmax, offset decoding, confidence floor,
/// per-class Soft-NMS and a per-video cap.
std::vector<Detection> predict(const Network& net, const RunConfig& cfg, const LabeledVideo& video);
std::vector<Detection> predict(const Network& net, const RunConfig& cfg,
                               std::span<const LabeledVideo> videos);

enum class EvalMode { Thumos, ActivityNet };
EvalMode parse_eval_mode(const std::string& s);
std::vector<double> thresholds_for(EvalMode mode);

EvalReport evaluate(std::span<const Detection> dets, const AnnotationFile& truth, EvalMode mode,
                    std::span<const double> an_grid = kDefaultAnGrid);

std::string report_to_json(const EvalReport& r);
std::string ar_an_csv(const EvalReport& r);

/// Checkpoint plus a "<path>.json" sidecar holding the run configuration.
void save_model(const std::filesystem::path& path, const Network& net, const RunConfig& cfg);
std::pair<Network, RunConfig> load_model(const std::filesystem::path& path);

}  // namespace ctcn
