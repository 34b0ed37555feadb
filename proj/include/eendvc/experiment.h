#pragma once

// Experiment-level helpers shared by the command-line tool and the end-to-end
// tests: dataset directories, run configuration and evaluation procedures.

#include <cstdint>
#include <string>
#include <vector>

#include "eendvc/features.h"
#include "eendvc/metrics.h"
#include "eendvc/pipeline.h"
#include "eendvc/synth.h"
#include "eendvc/train.h"
#include "eendvc/tune.h"

namespace eendvc {

// Dataset directory layout:
//   <dir>/reference.rttm        all reference annotations
//   <dir>/recordings.txt        one recording id per line, in order
//   <dir>/feats/<id>.feat       log-mel features
//   <dir>/wav/<id>.wav          audio (written by synth; optional on load)
struct SynthDatasetSpec {
  SynthSpec base;        // seed and recording_id are overridden per recording
  int num_recordings = 8;
  std::uint64_t seed = 0;
  std::string prefix = "rec";
  bool write_audio = true;
};

// Recording i uses seed (seed * 1000003 + i) and id "<prefix><i:03d>".
std::vector<LabeledRecording> synth_dataset(const SynthDatasetSpec& spec, const std::string& out_dir = {});

std::vector<LabeledRecording> load_dataset(const std::string& dir, const std::string& corpus = "default");

// Full configuration of a run. JSON objects with unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  PipelineParams pipeline;
  std::vector<std::string> train_data;  // dataset directories (one corpus each)
  std::vector<std::string> val_data;

  void validate() const;  // also checks that dataset directories exist
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& config);

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);
std::string pipeline_params_to_json(const PipelineParams& p);
PipelineParams pipeline_params_from_json(const std::string& text);

// Non-overlapping windows of length W, slots relabeled with the oracle
// assignment, scored against the reference (collar 0).
CorpusScore oracle_eval(const SegmentationModel& model, const std::vector<LabeledRecording>& data,
                        double collar = 0.0);

// Full pipeline (sliding windows, embeddings, AHC, aggregation).
CorpusScore pipeline_eval(const SegmentationModel& model, const std::vector<LabeledRecording>& data,
                          const PipelineParams& params, double collar = 0.0);

// Tunes the clustering stage on `data` with macro DER as objective; the local
// model runs once per recording.
TuneResult tune_pipeline(const SegmentationModel& model, const std::vector<LabeledRecording>& data,
                         const PipelineParams& base, const TuneOptions& options, double collar = 0.0);

}  // namespace eendvc
