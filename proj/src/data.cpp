#include "ctcn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ctcn {

using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

json segment_json(const GroundTruth& g) {
  return {{"start", g.segment.start}, {"end", g.segment.end}, {"label", g.label}};
}

}  // namespace

std::string encode_features(const FeatureSequence& f) {
  std::string out = "CTF1";
  put_u32(out, static_cast<std::uint32_t>(f.concepts()));
  put_u32(out, static_cast<std::uint32_t>(f.snippets()));
  for (double v : f.values.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

FeatureSequence decode_features(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "CTF1") {
    throw std::runtime_error("not a CTF1 feature file");
  }
  const std::size_t c = get_u32(bytes, 4), t = get_u32(bytes, 8);
  if (c == 0 || t == 0 || bytes.size() != 12 + 4 * c * t) {
    throw std::runtime_error("CTF1 payload size does not match " + std::to_string(c) + "x" +
                             std::to_string(t));
  }
  std::vector<double> values(c * t);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
  }
  return FeatureSequence(Tensor({c, t}, std::move(values)));
}

void write_features(const std::filesystem::path& path, const FeatureSequence& f) {
  dump(path, encode_features(f));
}

FeatureSequence read_features(const std::filesystem::path& path) {
  return decode_features(slurp(path));
}

void write_annotations(const std::filesystem::path& path, const AnnotationFile& a) {
  json videos = json::array();
  for (const auto& v : a.videos) {
    json actions = json::array();
    for (const auto& g : v.actions) actions.push_back(segment_json(g));
    videos.push_back({{"id", v.id}, {"snippets", v.snippets}, {"actions", actions}});
  }
  json doc{{"num_classes", a.num_classes}, {"videos", videos}};
  dump(path, doc.dump(1) + "\n");
}

AnnotationFile read_annotations(const std::filesystem::path& path) {
  const json doc = json::parse(slurp(path));
  AnnotationFile a;
  a.num_classes = doc.at("num_classes").get<int>();
  for (const auto& v : doc.at("videos")) {
    VideoAnnotation va;
    va.id = v.at("id").get<std::string>();
    va.snippets = v.at("snippets").get<std::size_t>();
    for (const auto& g : v.at("actions")) {
      GroundTruth gt{{g.at("start").get<double>(), g.at("end").get<double>()}, g.at("label").get<int>()};
      if (!gt.segment.valid()) {
        throw std::runtime_error("invalid segment in video " + va.id);
      }
      if (gt.label < 1 || gt.label > a.num_classes) {
        throw std::runtime_error("label " + std::to_string(gt.label) + " out of range in video " + va.id);
      }
      va.actions.push_back(gt);
    }
    a.videos.push_back(std::move(va));
  }
  return a;
}

std::vector<Instance> instances(const AnnotationFile& a) {
  std::vector<Instance> out;
  for (const auto& v : a.videos)
    for (const auto& g : v.actions) out.push_back({v.id, g.label, g.segment});
  return out;
}

void write_detections(const std::filesystem::path& path, std::span<const Detection> dets) {
  std::string out;
  for (const auto& d : dets) {
    json j{{"video", d.video_id},
           {"label", d.label},
           {"score", d.score},
           {"start", d.segment.start},
           {"end", d.segment.end}};
    out += j.dump() + "\n";
  }
  dump(path, out);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("video").get<std::string>(), j.at("label").get<int>(),
                     j.at("score").get<double>(),
                     {j.at("start").get<double>(), j.at("end").get<double>()}});
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_videos == 0 || snippets == 0 || concepts == 0 || num_classes < 1) {
    throw std::invalid_argument("synthetic spec needs positive videos, snippets, concepts and classes");
  }
  if (min_actions > max_actions || min_action_snippets > max_action_snippets ||
      min_action_snippets < 2) {
    throw std::invalid_argument("invalid action count or length range (lengths must be >= 2 snippets)");
  }
  if (min_actions > 0 &&
      min_actions * min_action_snippets + (min_actions - 1) > snippets) {
    throw std::invalid_argument("infeasible packing: " + std::to_string(min_actions) +
                                " actions of >= " + std::to_string(min_action_snippets) +
                                " snippets cannot fit in " + std::to_string(snippets));
  }
  if (action_noise < 0 || background_noise < 0) throw std::invalid_argument("noise must be >= 0");
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t c = spec.concepts, t = spec.snippets;

  Dataset d;
  d.num_classes = spec.num_classes;
  d.prototypes.assign(static_cast<std::size_t>(spec.num_classes), std::vector<double>(c));
  for (auto& p : d.prototypes)
    for (auto& v : p) v = unit(rng);

  std::uniform_int_distribution<std::size_t> count_dist(spec.min_actions, spec.max_actions);
  std::uniform_int_distribution<std::size_t> len_dist(spec.min_action_snippets, spec.max_action_snippets);
  std::uniform_int_distribution<int> label_dist(1, spec.num_classes);
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(spec.num_videos)));

  for (std::size_t vi = 0; vi < spec.num_videos; ++vi) {
    std::size_t n = 0;
    std::vector<std::size_t> lengths;
    for (int attempt = 0;; ++attempt) {
      n = count_dist(rng);
      lengths.clear();
      std::size_t used = n > 0 ? n - 1 : 0;
      for (std::size_t k = 0; k < n; ++k) used += lengths.emplace_back(len_dist(rng));
      if (used <= t) break;
      if (attempt == 100) {
        n = spec.min_actions;
        lengths.assign(n, spec.min_action_snippets);
        break;
      }
    }
    std::size_t free = t - std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}) -
                       (n > 0 ? n - 1 : 0);
    // split the free background over n+1 slots by sorted uniform cuts
    std::uniform_int_distribution<std::size_t> cut_dist(0, free);
    std::vector<std::size_t> cuts(n);
    for (auto& cut : cuts) cut = cut_dist(rng);
    std::sort(cuts.begin(), cuts.end());

    std::vector<double> values(c * t);
    for (auto& v : values) v = spec.background_noise * unit(rng);
    LabeledVideo video;
    char name[32];
    std::snprintf(name, sizeof name, "video_%04zu", vi);
    video.id = name;
    std::size_t cursor = 0, prev_cut = 0;
    for (std::size_t k = 0; k < n; ++k) {
      cursor += cuts[k] - prev_cut + (k > 0 ? 1 : 0);
      prev_cut = cuts[k];
      const int label = label_dist(rng);
      const auto& proto = d.prototypes[static_cast<std::size_t>(label - 1)];
      for (std::size_t s = cursor; s < cursor + lengths[k]; ++s)
        for (std::size_t r = 0; r < c; ++r) values[r * t + s] = proto[r] + spec.action_noise * unit(rng);
      video.actions.push_back({{static_cast<double>(cursor) / static_cast<double>(t),
                                static_cast<double>(cursor + lengths[k]) / static_cast<double>(t)},
                               label});
      cursor += lengths[k];
    }
    for (auto& v : values) v = static_cast<float>(v);
    video.features = FeatureSequence(Tensor({c, t}, std::move(values)));
    (vi < n_train ? d.train : d.val).push_back(std::move(video));
  }
  return d;
}

AnnotationFile annotations_of(std::span<const LabeledVideo> videos, int num_classes) {
  AnnotationFile a;
  a.num_classes = num_classes;
  for (const auto& v : videos) a.videos.push_back({v.id, v.features.snippets(), v.actions});
  return a;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir / "features");
  for (const auto* split : {&d.train, &d.val}) {
    for (const auto& v : *split) write_features(dir / "features" / (v.id + ".ctf"), v.features);
  }
  write_annotations(dir / "train.json", annotations_of(d.train, d.num_classes));
  write_annotations(dir / "val.json", annotations_of(d.val, d.num_classes));
}

std::vector<LabeledVideo> load_split(const std::filesystem::path& dir, const std::string& split,
                                     int* num_classes) {
  const auto ann = read_annotations(dir / (split + ".json"));
  if (num_classes) *num_classes = ann.num_classes;
  std::vector<LabeledVideo> out;
  for (const auto& v : ann.videos) {
    auto f = read_features(dir / "features" / (v.id + ".ctf"));
    if (f.snippets() != v.snippets) {
      throw std::runtime_error("video " + v.id + " has " + std::to_string(f.snippets()) +
                               " snippets, annotations say " + std::to_string(v.snippets));
    }
    out.push_back({v.id, std::move(f), v.actions});
  }
  return out;
}

}  // namespace ctcn
