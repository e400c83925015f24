#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctcn/augment.hpp"
#include "ctcn/eval.hpp"

namespace ctcn {

// ---- CTF1 feature files ----------------------------------------------------
// "CTF1", u32 concepts, u32 snippets, then concepts*snippets f32 values,
// concept-major, all little-endian.

std::string encode_features(const FeatureSequence& f);
FeatureSequence decode_features(std::string_view bytes);
void write_features(const std::filesystem::path& path, const FeatureSequence& f);
FeatureSequence read_features(const std::filesystem::path& path);

// ---- annotations -----------------------------------------------------------

struct VideoAnnotation {
  std::string id;
  std::size_t snippets = 0;
  std::vector<GroundTruth> actions;
};

struct AnnotationFile {
  int num_classes = 0;
  std::vector<VideoAnnotation> videos;
};

void write_annotations(const std::filesystem::path& path, const AnnotationFile& a);
AnnotationFile read_annotations(const std::filesystem::path& path);
std::vector<Instance> instances(const AnnotationFile& a);

// ---- detections (JSON lines) -------------------------------------------------

void write_detections(const std::filesystem::path& path, std::span<const Detection> dets);
std::vector<Detection> read_detections(const std::filesystem::path& path);

// ---- synthetic data ----------------------------------------------------------

struct SyntheticSpec {
  std::size_t num_videos = 80;
  std::size_t snippets = 64;
  std::size_t concepts = 16;
  int num_classes = 3;
  std::size_t min_actions = 1;
  std::size_t max_actions = 3;
  std::size_t min_action_snippets = 4;
  std::size_t max_action_snippets = 24;
  double action_noise = 0.5;
  double background_noise = 0.5;

  void validate() const;
};

struct Dataset {
  int num_classes = 0;
  std::vector<std::vector<double>> prototypes;  // one per class, length c
  std::vector<LabeledVideo> train;
  std::vector<LabeledVideo> val;
};

/// Class k draws a fixed prototype vector; snippets inside a class-k action
/// are prototype + noise, background snippets are noise. Actions never
/// overlap and leave at least one background snippet between them. The
/// first 80% of videos form the training split. Values are rounded to f32
/// so that in-memory and on-disk datasets agree exactly.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes features/<id>.ctf plus train.json and val.json under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& d);
std::vector<LabeledVideo> load_split(const std::filesystem::path& dir, const std::string& split,
                                     int* num_classes = nullptr);

AnnotationFile annotations_of(std::span<const LabeledVideo> videos, int num_classes);

}  // namespace ctcn
