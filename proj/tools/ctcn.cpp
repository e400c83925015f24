// ctcn command-line driver: synth, train, predict, eval, gradcheck, inspect.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctcn/anchors.hpp"
#include "ctcn/data.hpp"
#include "ctcn/gradcheck.hpp"
#include "ctcn/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace ctcn;

struct Overrides {
  std::string config;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> depth;
  std::optional<std::string> aug_move;
  std::optional<std::string> aug_crop;
  bool paper = false;
};

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.paper ? RunConfig::paper_preset() : RunConfig::desk_preset();
  if (!o.config.empty()) cfg = load_run_config(o.config, cfg);
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.variant) cfg.network.variant = parse_variant(*o.variant);
  if (o.depth) {
    if (*o.depth == 0) throw std::invalid_argument("--depth must be >= 1");
    cfg.network.stage_blocks.assign(cfg.network.stage_blocks.size(), *o.depth);
  }
  if (o.aug_move) apply_setting(cfg, "aug_move", *o.aug_move);
  if (o.aug_crop) apply_setting(cfg, "aug_crop", *o.aug_crop);
  cfg.synth.snippets = cfg.network.input_snippets;
  cfg.synth.concepts = cfg.network.concepts;
  cfg.synth.num_classes = static_cast<int>(cfg.network.num_classes);
  cfg.validate();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

void check_dataset(const RunConfig& cfg, int num_classes) {
  if (static_cast<std::size_t>(num_classes) != cfg.network.num_classes) {
    throw std::invalid_argument("dataset has " + std::to_string(num_classes) +
                                " classes, config expects " +
                                std::to_string(cfg.network.num_classes));
  }
}

int run_gradcheck(const RunConfig& cfg, std::size_t seeds, std::size_t coords) {
  NetworkConfig ncfg = cfg.network;
  double worst = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    Network net(ncfg, cfg.seed + s);
    // zero biases leave relu inputs exactly on the kink, where central
    // differences are one-sided; move them off it
    Rng jitter(cfg.seed + 2000 + s);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (auto& p : net.parameters())
      if (p.name.ends_with("bias"))
        for (auto& v : p.tensor.mutable_data()) v = noise(jitter);
    SyntheticSpec spec = cfg.synth;
    spec.num_videos = 1;
    const auto data = generate_synthetic(spec, cfg.seed + 1000 + s);
    const LabeledVideo& v = data.train.empty() ? data.val.front() : data.train.front();
    const auto anchors = enumerate_anchors(ncfg.anchors());
    const auto match = match_anchors(anchors, v.actions);
    std::vector<Tensor> params;
    for (auto& p : net.parameters()) params.push_back(p.tensor);
    auto f = [&] {
      const auto out = net.forward(v.features);
      return total_loss(out, ncfg.anchors(), ncfg.num_classes, anchors, match, v.actions, cfg.loss).total;
    };
    const double err = finite_difference_check(f, params, 1e-5, coords);
    worst = std::max(worst, err);
    std::cout << "seed " << cfg.seed + s << " max_rel_error " << err << "\n";
  }
  const bool ok = worst < 1e-4;
  std::cout << nlohmann::json{{"max_rel_error", worst}, {"ok", ok}}.dump() << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C-TCN temporal action localization toolkit"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "key=value or JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", o.settings, "extra key=value override (repeatable)");
  app.add_option("--seed", o.seed, "rng seed");
  app.add_option("--variant", o.variant, "ctcn, tcn or group_tcn");
  app.add_option("--depth", o.depth, "residual blocks per backbone stage");
  app.add_option("--aug-move", o.aug_move, "on|off");
  app.add_option("--aug-crop", o.aug_crop, "on|off");
  app.add_flag("--paper", o.paper, "start from the full-scale preset instead of the desk preset");

  std::string data_dir, model_path, out_path, log_path, split = "val", dets_path, ann_path,
      mode = "thumos", csv_path;
  std::size_t seeds = 1, coords = 4;
  bool anchors_csv = false;

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--out", out_path, "dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", model_path, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "loss log CSV");

  auto* predict_cmd = app.add_subcommand("predict", "write detections as JSON lines");
  predict_cmd->add_option("--model", model_path, "checkpoint path")->required();
  predict_cmd->add_option("--data", data_dir, "dataset directory")->required();
  predict_cmd->add_option("--split", split, "train or val");
  predict_cmd->add_option("--out", out_path, "detections file")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score detections");
  eval_cmd->add_option("--detections", dets_path)->required();
  eval_cmd->add_option("--annotations", ann_path)->required();
  eval_cmd->add_option("--mode", mode, "thumos or activitynet");
  eval_cmd->add_option("--out", out_path, "report JSON (stdout if omitted)");
  eval_cmd->add_option("--ar-an", csv_path, "AR-AN CSV");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  grad_cmd->add_option("--seeds", seeds, "number of seeds");
  grad_cmd->add_option("--coords", coords, "coordinates per parameter tensor (0 = all)");

  auto* inspect_cmd = app.add_subcommand("inspect", "print the architecture or the anchor table");
  inspect_cmd->add_flag("--anchors", anchors_csv, "dump anchors as CSV");

  std::string command = "ctcn";
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    }
    command = app.get_subcommands().front()->get_name();
    const RunConfig cfg = resolve(o);

    if (*synth) {
      const auto d = generate_synthetic(cfg.synth, cfg.seed);
      write_dataset(out_path, d);
      std::cout << "wrote " << d.train.size() << " train and " << d.val.size() << " val videos to "
                << out_path << "\n";
    } else if (*train_cmd) {
      int classes = 0;
      const auto train_set = load_split(data_dir, "train", &classes);
      check_dataset(cfg, classes);
      const auto val_set = load_split(data_dir, "val");
      Network net(cfg.network, cfg.seed);
      const auto result = train(net, cfg, train_set, val_set, [](const EpochLog& e) {
        std::printf("epoch %zu train_cls %.6f train_loc %.6f val_cls %.6f val_loc %.6f\n", e.epoch,
                    e.train_cls, e.train_loc, e.val_cls, e.val_loc);
        std::fflush(stdout);
      });
      save_model(model_path, net, cfg);
      if (!log_path.empty()) write_loss_log(log_path, result.log);
      std::cout << "best epoch " << result.best_epoch << (result.early_stopped ? " (early stop)" : "")
                << ", saved " << model_path << "\n";
    } else if (*predict_cmd) {
      auto [net, model_cfg] = load_model(model_path);
      const auto videos = load_split(data_dir, split);
      const auto dets = predict(net, model_cfg, videos);
      write_detections(out_path, dets);
      std::cout << dets.size() << " detections for " << videos.size() << " videos\n";
    } else if (*eval_cmd) {
      const auto dets = read_detections(dets_path);
      const auto truth = read_annotations(ann_path);
      const auto report = evaluate(dets, truth, parse_eval_mode(mode));
      const auto text = report_to_json(report);
      if (out_path.empty()) {
        std::cout << text;
      } else {
        write_text(out_path, text);
        std::cout << "mean mAP " << report.mean_map << "\n";
      }
      if (!csv_path.empty()) write_text(csv_path, ar_an_csv(report));
    } else if (*grad_cmd) {
      return run_gradcheck(cfg, seeds, coords);
    } else if (*inspect_cmd) {
      if (anchors_csv) {
        std::cout << "l,j,m,center,length\n";
        std::cout.precision(17);
        for (const auto& a : enumerate_anchors(cfg.network.anchors())) {
          std::cout << a.scale << ',' << a.cell << ',' << a.anchor << ',' << a.center << ','
                    << a.length << '\n';
        }
      } else {
        Network net(cfg.network, cfg.seed);
        for (const auto& l : net.summary()) {
          std::printf("%-28s %-14s %zu\n", l.name.c_str(), shape_str(l.output).c_str(), l.parameters);
        }
        std::printf("total parameters %zu, depth %zu\n", net.parameter_count(), cfg.network.depth());
      }
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "usage"}, {"command", command}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  } catch (const TrainingError& e) {
    std::cerr << nlohmann::json{{"error", "training"},
                                {"command", command},
                                {"epoch", e.epoch},
                                {"step", e.step},
                                {"message", e.what()}}
                     .dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "failed"}, {"command", command}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
