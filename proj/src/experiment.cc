#include "eendvc/experiment.h"

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "eendvc/error.h"
#include "json.hpp"

namespace eendvc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string recording_name(const std::string& prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return prefix + buf;
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(std::string(what) + " must be an object");
  return j;
}

// Applies every key of `j` through `set`; unknown keys and type mismatches
// are reported with the section name.
template <typename Setter>
void apply_keys(const json& j, const char* what, Setter set) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    try {
      known = set(it.key(), it.value());
    } catch (const json::exception& e) {
      throw ParseError(std::string(what) + " key '" + it.key() + "': " + e.what());
    }
    if (!known) throw ConfigError(std::string("unknown ") + what + " key '" + it.key() + "'");
  }
}

json train_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"batch", c.batch},
              {"lr_peak", c.lr_peak},
              {"warmup_epochs", c.warmup_epochs},
              {"cycle_epochs", c.cycle_epochs},
              {"halflife_epochs", c.halflife_epochs},
              {"cycle_floor", c.cycle_floor},
              {"adapt_lr", c.adapt_lr},
              {"adapt_patience", c.adapt_patience},
              {"grad_clip", c.grad_clip},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"seed", c.seed}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  apply_keys(j, "train config", [&](const std::string& k, const json& v) {
    if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "steps_per_epoch") c.steps_per_epoch = v.get<int>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "lr_peak") c.lr_peak = v.get<double>();
    else if (k == "warmup_epochs") c.warmup_epochs = v.get<double>();
    else if (k == "cycle_epochs") c.cycle_epochs = v.get<double>();
    else if (k == "halflife_epochs") c.halflife_epochs = v.get<double>();
    else if (k == "cycle_floor") c.cycle_floor = v.get<double>();
    else if (k == "adapt_lr") c.adapt_lr = v.get<double>();
    else if (k == "adapt_patience") c.adapt_patience = v.get<int>();
    else if (k == "grad_clip") c.grad_clip = v.get<double>();
    else if (k == "adam_beta1") c.adam_beta1 = v.get<double>();
    else if (k == "adam_beta2") c.adam_beta2 = v.get<double>();
    else if (k == "adam_eps") c.adam_eps = v.get<double>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
  return c;
}

json pipeline_json(const PipelineParams& p) {
  return json{{"hop", p.hop},
              {"clustering_threshold", p.clustering_threshold},
              {"min_cluster_size", p.min_cluster_size},
              {"min_embed_duration", p.min_embed_duration}};
}

PipelineParams pipeline_from(const json& j) {
  PipelineParams p;
  apply_keys(j, "pipeline config", [&](const std::string& k, const json& v) {
    if (k == "hop") p.hop = v.get<double>();
    else if (k == "clustering_threshold") p.clustering_threshold = v.get<double>();
    else if (k == "min_cluster_size") p.min_cluster_size = v.get<int>();
    else if (k == "min_embed_duration") p.min_embed_duration = v.get<double>();
    else return false;
    return true;
  });
  return p;
}

std::vector<std::string> string_list(const json& v) {
  if (v.is_string()) return {v.get<std::string>()};
  return v.get<std::vector<std::string>>();
}

ScoringPair make_pair(const LabeledRecording& rec, Annotation hyp) {
  ScoringPair pair;
  pair.reference = rec.reference;
  pair.hypothesis = std::move(hyp);
  pair.duration = rec.features.duration();
  return pair;
}

}  // namespace

std::vector<LabeledRecording> synth_dataset(const SynthDatasetSpec& spec, const std::string& out_dir) {
  if (spec.num_recordings < 1) throw ConfigError("num_recordings must be positive");
  std::vector<LabeledRecording> out;
  std::vector<Annotation> refs;
  std::string ids;
  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "feats");
    if (spec.write_audio) fs::create_directories(fs::path(out_dir) / "wav");
  }
  for (int i = 0; i < spec.num_recordings; ++i) {
    SynthSpec s = spec.base;
    s.seed = spec.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    s.recording_id = recording_name(spec.prefix, i);
    const Conversation conv = gen_conversation(s);
    LabeledRecording rec;
    rec.features = logmel(conv.audio);
    rec.reference = conv.annotation;
    if (!out_dir.empty()) {
      save_features((fs::path(out_dir) / "feats" / (s.recording_id + ".feat")).string(), rec.features);
      if (spec.write_audio) write_wav((fs::path(out_dir) / "wav" / (s.recording_id + ".wav")).string(), conv.audio);
    }
    refs.push_back(rec.reference);
    ids += s.recording_id + "\n";
    out.push_back(std::move(rec));
  }
  if (!out_dir.empty()) {
    write_text_file((fs::path(out_dir) / "reference.rttm").string(), write_rttm(refs));
    write_text_file((fs::path(out_dir) / "recordings.txt").string(), ids);
  }
  return out;
}

std::vector<LabeledRecording> load_dataset(const std::string& dir, const std::string& corpus) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw ParseError("dataset directory '" + dir + "' does not exist");
  std::map<std::string, Annotation> refs;
  for (auto& a : read_rttm_file((root / "reference.rttm").string())) refs[a.recording_id] = std::move(a);
  std::istringstream ids(read_text_file((root / "recordings.txt").string()));
  std::vector<LabeledRecording> out;
  std::string id;
  while (std::getline(ids, id)) {
    if (id.empty()) continue;
    LabeledRecording rec;
    rec.corpus = corpus;
    rec.features = load_features((root / "feats" / (id + ".feat")).string());
    auto it = refs.find(id);
    // A recording without reference segments is all silence.
    rec.reference = it != refs.end() ? it->second : Annotation{id, {}};
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw ParseError("dataset '" + dir + "' lists no recordings");
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  pipeline.validate(model.window);
  for (const auto* list : {&train_data, &val_data}) {
    for (const auto& d : *list) {
      if (!fs::is_directory(d)) throw ConfigError("dataset directory '" + d + "' does not exist");
    }
  }
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_object(text, "run config");
  RunConfig c;
  apply_keys(j, "run config", [&](const std::string& k, const json& v) {
    if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "model") c.model = config_from_json(v.dump());
    else if (k == "train") c.train = train_from(v);
    else if (k == "pipeline") c.pipeline = pipeline_from(v);
    else if (k == "train_data") c.train_data = string_list(v);
    else if (k == "val_data") c.val_data = string_list(v);
    else return false;
    return true;
  });
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j{{"seed", c.seed},
         {"model", json::parse(config_to_json(c.model))},
         {"train", train_json(c.train)},
         {"pipeline", pipeline_json(c.pipeline)},
         {"train_data", c.train_data},
         {"val_data", c.val_data}};
  return j.dump(2) + "\n";
}

std::string train_config_to_json(const TrainConfig& c) { return train_json(c).dump(2) + "\n"; }
TrainConfig train_config_from_json(const std::string& text) { return train_from(parse_object(text, "train config")); }
std::string pipeline_params_to_json(const PipelineParams& p) { return pipeline_json(p).dump(2) + "\n"; }
PipelineParams pipeline_params_from_json(const std::string& text) {
  return pipeline_from(parse_object(text, "pipeline config"));
}

CorpusScore oracle_eval(const SegmentationModel& model, const std::vector<LabeledRecording>& data, double collar) {
  std::vector<ScoringPair> pairs;
  for (const auto& rec : data) {
    const auto spans = tile_windows(rec.features.duration(), model.config().window);
    const auto windows = segment_windows(rec.features, model, spans);
    pairs.push_back(make_pair(
        rec, oracle_stitch(windows, rec.reference, rec.features.frame_rate, rec.reference.recording_id)));
  }
  return der_corpus(pairs, collar);
}

CorpusScore pipeline_eval(const SegmentationModel& model, const std::vector<LabeledRecording>& data,
                          const PipelineParams& params, double collar) {
  const MeanPoolEmbedder embedder;
  std::vector<ScoringPair> pairs;
  for (const auto& rec : data) {
    pairs.push_back(
        make_pair(rec, run_pipeline(rec.features, model, embedder, params, rec.reference.recording_id)));
  }
  return der_corpus(pairs, collar);
}

TuneResult tune_pipeline(const SegmentationModel& model, const std::vector<LabeledRecording>& data,
                         const PipelineParams& base, const TuneOptions& options, double collar) {
  const MeanPoolEmbedder embedder;
  std::vector<SegmentedRecording> segmented;
  for (const auto& rec : data) {
    segmented.push_back(segment_recording(rec.features, model, embedder, base, rec.reference.recording_id));
  }
  auto objective = [&](const PipelineParams& p) {
    std::vector<ScoringPair> pairs;
    for (std::size_t i = 0; i < data.size(); ++i) {
      pairs.push_back(make_pair(data[i], cluster_recording(segmented[i], embedder, p)));
    }
    return der_corpus(pairs, collar).macro_der;
  };
  return tune(objective, SearchSpace{}, options, base);
}

}  // namespace eendvc
