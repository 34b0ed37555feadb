#include "eendvc/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "eendvc/error.h"
#include "eendvc/experiment.h"
#include "eendvc/labels.h"

namespace eendvc::cli {
namespace {

namespace fs = std::filesystem;

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

FrameMatrix load_input(const std::string& path) {
  if (fs::path(path).extension() == ".wav") {
    int rate = 0;
    const auto audio = read_wav(path, &rate);
    if (rate != kSampleRate) throw ParseError("'" + path + "' is not 16 kHz audio");
    return logmel(audio);
  }
  return load_features(path);
}

std::vector<LabeledRecording> load_datasets(const std::vector<std::string>& dirs) {
  std::vector<LabeledRecording> out;
  for (const auto& d : dirs) {
    auto part = load_dataset(d, fs::path(d).lexically_normal().filename().string());
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string init;
  int epochs = -1;
  int steps = -1;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "run directory")->required();
  cmd->add_option("--epochs", a.epochs, "override train.epochs");
  cmd->add_option("--steps-per-epoch", a.steps, "override train.steps_per_epoch");
}

RunConfig resolve(const TrainArgs& a) {
  RunConfig cfg = run_config_from_json(read_text_file(a.config));
  if (a.epochs >= 0) cfg.train.epochs = a.epochs;
  if (a.steps >= 0) cfg.train.steps_per_epoch = a.steps;
  cfg.validate();
  if (cfg.train_data.empty() || cfg.val_data.empty()) throw ConfigError("train_data and val_data are required");
  return cfg;
}

int run_training(const TrainArgs& a, bool adaptation) {
  const RunConfig cfg = resolve(a);
  const auto train = load_datasets(cfg.train_data);
  const auto val = load_datasets(cfg.val_data);
  SegmentationModel model = adaptation ? load_model(a.init) : build_model(cfg.model);
  if (!adaptation) {
    std::vector<FrameMatrix> feats;
    for (const auto& r : train) feats.push_back(r.features);
    fit_input_normalization(model, feats);
  }
  fs::create_directories(a.out);
  write_text_file((fs::path(a.out) / "config.json").string(), run_config_to_json(cfg));
  TrainHistory history;
  auto progress = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train_loss " << format("%.4f", e.train_loss) << " val_loss "
              << format("%.4f", e.val_loss) << " val_der " << format("%.4f", e.val_local_der) << "\n";
  };
  const SegmentationModel result = adaptation ? adapt(model, train, val, cfg.train, &history, progress)
                                              : train_segmentation(model, train, val, cfg.train, &history, progress);
  write_text_file((fs::path(a.out) / "history.csv").string(), history.to_csv());
  save_model((fs::path(a.out) / "model.sdmd").string(), result);
  std::cout << "best_epoch " << history.best_epoch << "\n";
  return kExitOk;
}

int run_stats(const std::vector<std::string>& rttms, double window, double coverage) {
  std::vector<Annotation> all;
  for (const auto& p : rttms) {
    auto part = read_rttm_file(p);
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  const CapacityStats s = speaker_capacity_stats(all, window, coverage);
  std::cout << "windows " << s.num_windows << "\nN " << s.num_speakers << "\nK " << s.max_simultaneous << "\n";
  return kExitOk;
}

int run_score(const std::string& ref_path, const std::string& hyp_path, const std::string& uem_path,
              double collar, double min_duration, const std::string& csv) {
  const auto refs = read_rttm_file(ref_path);
  std::map<std::string, Annotation> hyps;
  for (auto& h : read_rttm_file(hyp_path)) hyps[h.recording_id] = std::move(h);
  std::map<std::string, Uem> uems;
  if (!uem_path.empty()) {
    for (auto& u : read_uem(read_text_file(uem_path))) uems[u.recording_id] = std::move(u);
  }
  std::vector<ScoringPair> pairs;
  for (const auto& r : refs) {
    ScoringPair p;
    p.reference = r;
    auto h = hyps.find(r.recording_id);
    p.hypothesis = h != hyps.end() ? h->second : Annotation{r.recording_id, {}};
    auto u = uems.find(r.recording_id);
    if (u != uems.end()) {
      p.uem = u->second;
      double end = 0.0;
      for (const auto& s : u->second.scored_regions) end = std::max(end, s.end);
      p.duration = end;
    }
    pairs.push_back(std::move(p));
  }
  const CorpusScore score = der_corpus(pairs, collar, min_duration);
  if (!csv.empty()) write_or_print(csv, score_report_csv(score));
  for (const auto& id : score.excluded) std::cerr << "excluded " << id << " (shorter than min duration)\n";
  std::cout << "DER " << format("%.3f", score.macro_der) << "\n";
  return kExitOk;
}

std::string summary_csv(const SegmentationModel& model, const std::string& label, double der) {
  const auto& c = model.config();
  return "model,processing,loss_type,window,oracle_der\n" + label + "," + to_string(c.processing) + "," +
         to_string(c.loss_type) + "," + format("%g", c.window) + "," + format("%.6f", der) + "\n";
}

struct SummaryRow {
  std::string model, processing, loss_type;
  double window = 0.0;
  double der = 0.0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

int run_report(const std::vector<std::string>& inputs, const std::string& md_path, const std::string& csv_path) {
  std::vector<SummaryRow> rows;
  for (const auto& path : inputs) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "model,processing,loss_type,window,oracle_der") {
      throw ParseError("'" + path + "' is not an oracle-eval summary");
    }
    int n = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != 5) throw ParseError("'" + path + "' line " + std::to_string(n + 2) + ": expected 5 fields");
      try {
        rows.push_back({cells[0], cells[1], cells[2], std::stod(cells[3]), std::stod(cells[4])});
      } catch (const std::logic_error&) {
        throw ParseError("'" + path + "' line " + std::to_string(n + 2) + ": bad number");
      }
      ++n;
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    return std::tie(a.processing, a.loss_type, a.window, a.model) <
           std::tie(b.processing, b.loss_type, b.window, b.model);
  });
  std::string md = "| model | processing | loss | window (s) | oracle DER (%) |\n|---|---|---|---|---|\n";
  std::string csv = "processing,loss_type,window,oracle_der\n";
  for (const auto& r : rows) {
    md += "| " + r.model + " | " + r.processing + " | " + r.loss_type + " | " + format("%g", r.window) + " | " +
          format("%.2f", 100.0 * r.der) + " |\n";
    csv += r.processing + "," + r.loss_type + "," + format("%g", r.window) + "," + format("%.6f", r.der) + "\n";
  }
  write_or_print(md_path, md);
  if (!csv_path.empty()) write_text_file(csv_path, csv);
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app("Speaker diarization with local segmentation and clustering", "eendvc");
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  SynthDatasetSpec synth_spec;
  std::string synth_out;
  bool no_audio = false;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--num-recordings", synth_spec.num_recordings, "number of recordings")->capture_default_str();
  synth->add_option("--seed", synth_spec.seed, "dataset seed")->capture_default_str();
  synth->add_option("--duration", synth_spec.base.duration, "seconds per recording")->capture_default_str();
  synth->add_option("--speakers", synth_spec.base.num_speakers, "speakers per recording")->capture_default_str();
  synth->add_option("--overlap-prob", synth_spec.base.overlap_prob, "overlap acceptance probability")
      ->capture_default_str();
  synth->add_option("--prefix", synth_spec.prefix, "recording id prefix")->capture_default_str();
  synth->add_flag("--no-audio", no_audio, "skip writing WAV files");

  // stats
  auto* stats = app.add_subcommand("stats", "speaker capacity statistics (N, K)");
  std::vector<std::string> stats_rttm;
  double stats_window = 10.0, coverage = 0.97;
  stats->add_option("--rttm", stats_rttm, "reference RTTM files")->required()->check(CLI::ExistingFile);
  stats->add_option("--window", stats_window, "window length in seconds")->capture_default_str();
  stats->add_option("--coverage", coverage, "fraction of windows to cover")->capture_default_str();

  // train / adapt
  TrainArgs train_args, adapt_args;
  auto* train = app.add_subcommand("train", "train a segmentation model");
  add_train_flags(train, train_args);
  auto* adapt_cmd = app.add_subcommand("adapt", "fine-tune a model on a target domain");
  add_train_flags(adapt_cmd, adapt_args);
  adapt_cmd->add_option("--model", adapt_args.init, "initial checkpoint")->required()->check(CLI::ExistingFile);

  // infer
  auto* infer = app.add_subcommand("infer", "diarize audio (.wav) or features (.feat)");
  std::string infer_model, infer_params, infer_out;
  std::vector<std::string> infer_inputs;
  double infer_threshold = -1.0;
  int infer_min_size = -1;
  infer->add_option("--model", infer_model, "checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", infer_inputs, "input files")->required()->check(CLI::ExistingFile);
  infer->add_option("--params", infer_params, "pipeline parameters (JSON)")->check(CLI::ExistingFile);
  infer->add_option("--threshold", infer_threshold, "override clustering threshold");
  infer->add_option("--min-cluster-size", infer_min_size, "override minimum cluster size");
  infer->add_option("--out", infer_out, "output RTTM (default stdout)");

  // score
  auto* score = app.add_subcommand("score", "diarization error rate");
  std::string ref_path, hyp_path, uem_path, score_csv;
  double collar = 0.0, min_duration = 0.0;
  score->add_option("--ref", ref_path, "reference RTTM")->required()->check(CLI::ExistingFile);
  score->add_option("--hyp", hyp_path, "hypothesis RTTM")->required()->check(CLI::ExistingFile);
  score->add_option("--uem", uem_path, "scored regions")->check(CLI::ExistingFile);
  score->add_option("--collar", collar, "forgiveness collar in seconds")->capture_default_str();
  score->add_option("--min-duration", min_duration, "skip recordings shorter than this")->capture_default_str();
  score->add_option("--csv", score_csv, "per-file report (- for stdout)");

  // oracle-eval
  auto* oracle = app.add_subcommand("oracle-eval", "non-overlapping windows stitched with oracle clustering");
  std::string oracle_model, oracle_data, oracle_csv, oracle_summary, oracle_label = "model";
  double oracle_collar = 0.0;
  oracle->add_option("--model", oracle_model, "checkpoint")->required()->check(CLI::ExistingFile);
  oracle->add_option("--data", oracle_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  oracle->add_option("--collar", oracle_collar, "forgiveness collar in seconds")->capture_default_str();
  oracle->add_option("--csv", oracle_csv, "per-file report");
  oracle->add_option("--summary", oracle_summary, "one-row summary CSV for report");
  oracle->add_option("--label", oracle_label, "model name in the summary")->capture_default_str();

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "search clustering threshold and minimum cluster size");
  std::string tune_model, tune_out, tune_params;
  std::vector<std::string> tune_data;
  TuneOptions tune_opts;
  double tune_collar = 0.0;
  tune_cmd->add_option("--model", tune_model, "checkpoint")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--data", tune_data, "dataset directories (pooled)")->required()->check(CLI::ExistingDirectory);
  tune_cmd->add_option("--budget", tune_opts.budget, "number of trials")->capture_default_str();
  tune_cmd->add_option("--seed", tune_opts.seed, "search seed")->capture_default_str();
  tune_cmd->add_option("--params", tune_params, "base pipeline parameters (JSON)")->check(CLI::ExistingFile);
  tune_cmd->add_option("--collar", tune_collar, "forgiveness collar in seconds")->capture_default_str();
  tune_cmd->add_option("--out", tune_out, "directory for trials.csv and best_params.json")->required();

  // report
  auto* report = app.add_subcommand("report", "aggregate oracle-eval summaries");
  std::vector<std::string> report_inputs;
  std::string report_md, report_csv;
  report->add_option("inputs", report_inputs, "summary CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("--markdown", report_md, "markdown table (default stdout)");
  report->add_option("--csv", report_csv, "oracle DER vs window size");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      synth_spec.write_audio = !no_audio;
      const auto data = synth_dataset(synth_spec, synth_out);
      std::cout << "wrote " << data.size() << " recordings to " << synth_out << "\n";
      return kExitOk;
    }
    if (stats->parsed()) return run_stats(stats_rttm, stats_window, coverage);
    if (train->parsed()) return run_training(train_args, false);
    if (adapt_cmd->parsed()) return run_training(adapt_args, true);
    if (infer->parsed()) {
      const SegmentationModel model = load_model(infer_model);
      PipelineParams params = infer_params.empty() ? PipelineParams{}
                                                   : pipeline_params_from_json(read_text_file(infer_params));
      if (infer_threshold >= 0.0) params.clustering_threshold = infer_threshold;
      if (infer_min_size >= 0) params.min_cluster_size = infer_min_size;
      params.validate(model.config().window);
      const MeanPoolEmbedder embedder;
      std::vector<Annotation> out;
      for (const auto& input : infer_inputs) {
        out.push_back(run_pipeline(load_input(input), model, embedder, params, fs::path(input).stem().string()));
      }
      write_or_print(infer_out, write_rttm(out));
      return kExitOk;
    }
    if (score->parsed()) return run_score(ref_path, hyp_path, uem_path, collar, min_duration, score_csv);
    if (oracle->parsed()) {
      const SegmentationModel model = load_model(oracle_model);
      const CorpusScore s = oracle_eval(model, load_dataset(oracle_data), oracle_collar);
      if (!oracle_csv.empty()) write_or_print(oracle_csv, score_report_csv(s));
      if (!oracle_summary.empty()) write_text_file(oracle_summary, summary_csv(model, oracle_label, s.macro_der));
      std::cout << "oracle DER " << format("%.3f", s.macro_der) << "\n";
      return kExitOk;
    }
    if (tune_cmd->parsed()) {
      const SegmentationModel model = load_model(tune_model);
      const PipelineParams base =
          tune_params.empty() ? PipelineParams{} : pipeline_params_from_json(read_text_file(tune_params));
      const TuneResult r = tune_pipeline(model, load_datasets(tune_data), base, tune_opts, tune_collar);
      fs::create_directories(tune_out);
      write_text_file((fs::path(tune_out) / "trials.csv").string(), r.trial_log_csv());
      write_text_file((fs::path(tune_out) / "best_params.json").string(), pipeline_params_to_json(r.best.params));
      std::cout << "best DER " << format("%.3f", r.best.der) << " threshold "
                << format("%.4f", r.best.params.clustering_threshold) << " min_cluster_size "
                << r.best.params.min_cluster_size << "\n";
      return kExitOk;
    }
    if (report->parsed()) return run_report(report_inputs, report_md, report_csv);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace eendvc::cli
