#include "eendvc/cli.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "eendvc/experiment.h"

namespace eendvc {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(const std::vector<std::string>& args) {
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  CliRun r;
  r.code = cli::dispatch(args);
  r.out = ::testing::internal::GetCapturedStdout();
  r.err = ::testing::internal::GetCapturedStderr();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// One scratch directory with a small synthetic dataset for the whole suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / ("eendvc_cli_" + std::to_string(::getpid())));
    fs::remove_all(*root_);
    fs::create_directories(*root_);
    const CliRun r = run({"synth", "--out", data().string(), "--num-recordings", "3", "--seed", "4", "--duration",
                       "12", "--speakers", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }

  static fs::path data() { return *root_ / "data"; }
  static fs::path path(const std::string& name) { return *root_ / name; }

  // Writes a run configuration for a very small model and returns its path.
  static fs::path tiny_config(const std::string& name) {
    RunConfig cfg;
    cfg.seed = 1;
    cfg.model.window = 4.0;
    cfg.model.max_speakers = 2;
    cfg.model.d_model = 8;
    cfg.model.n_blocks = 1;
    cfg.model.d_state = 4;
    cfg.model.head_hidden = 8;
    cfg.train.epochs = 2;
    cfg.train.steps_per_epoch = 2;
    cfg.train.batch = 2;
    cfg.train.adapt_patience = 1;
    cfg.train_data = {data().string()};
    cfg.val_data = {data().string()};
    const fs::path p = path(name);
    spit(p, run_config_to_json(cfg));
    return p;
  }

  static fs::path* root_;
};

fs::path* Cli::root_ = nullptr;

TEST_F(Cli, SynthWritesTheDatasetLayout) {
  EXPECT_TRUE(fs::exists(data() / "reference.rttm"));
  EXPECT_TRUE(fs::exists(data() / "recordings.txt"));
  EXPECT_TRUE(fs::exists(data() / "feats" / "rec000.feat"));
  EXPECT_TRUE(fs::exists(data() / "wav" / "rec002.wav"));
  EXPECT_EQ(load_dataset(data().string()).size(), 3u);
}

TEST_F(Cli, ScoringAReferenceAgainstItselfIsZero) {
  const std::string ref = (data() / "reference.rttm").string();
  const CliRun r = run({"score", "--ref", ref, "--hyp", ref});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_EQ(r.out, "DER 0.000\n");
  const CliRun collar = run({"score", "--ref", ref, "--hyp", ref, "--collar", "0.25", "--csv", "-"});
  EXPECT_EQ(collar.code, cli::kExitOk);
  EXPECT_NE(collar.out.find("rec001"), std::string::npos);
}

TEST_F(Cli, ScoringAnEmptyHypothesisCountsEverythingMissed) {
  spit(path("empty.rttm"), "");
  const CliRun r = run({"score", "--ref", (data() / "reference.rttm").string(), "--hyp", path("empty.rttm").string()});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_EQ(r.out, "DER 1.000\n");
}

TEST_F(Cli, StatsPrintsCapacity) {
  const CliRun r = run({"stats", "--rttm", (data() / "reference.rttm").string(), "--window", "4"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_EQ(r.out.rfind("windows 9\nN ", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("\nK "), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  const CliRun r = run({"score", "--ref", (data() / "reference.rttm").string(), "--bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, MalformedInputExitsWithTwo) {
  spit(path("bad.rttm"), "SPEAKER rec 1 zero 1.0 <NA> <NA> a <NA> <NA>\n");
  const CliRun r = run({"score", "--ref", path("bad.rttm").string(), "--hyp", path("bad.rttm").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  spit(path("bad.json"), "{\"seed\": 1, \"mystery\": 2}");
  EXPECT_EQ(run({"train", "--config", path("bad.json").string(), "--out", path("never").string()}).code,
            cli::kExitData);
  EXPECT_FALSE(fs::exists(path("never")));
}

TEST_F(Cli, TrainIsReproducibleAndFeedsTheOtherCommands) {
  const fs::path cfg = tiny_config("tiny.json");
  const CliRun a = run({"train", "--config", cfg.string(), "--out", path("run_a").string()});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  const CliRun b = run({"train", "--config", cfg.string(), "--out", path("run_b").string()});
  ASSERT_EQ(b.code, cli::kExitOk) << b.err;
  EXPECT_EQ(slurp(path("run_a") / "model.sdmd"), slurp(path("run_b") / "model.sdmd"));
  EXPECT_EQ(slurp(path("run_a") / "history.csv"), slurp(path("run_b") / "history.csv"));
  EXPECT_EQ(run_config_from_json(slurp(path("run_a") / "config.json")).train.epochs, 2);
  const std::string model = (path("run_a") / "model.sdmd").string();

  const CliRun o = run({"oracle-eval", "--model", model, "--data", data().string(), "--summary",
                     path("summary_a.csv").string(), "--label", "tiny"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(o.out.rfind("oracle DER ", 0), 0u);
  EXPECT_EQ(slurp(path("summary_a.csv")).rfind("model,processing,loss_type,window,oracle_der\ntiny,mamba,", 0), 0u);

  const CliRun t = run({"tune", "--model", model, "--data", data().string(), "--budget", "6", "--out",
                     path("tune").string()});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  const std::string trials = slurp(path("tune") / "trials.csv");
  EXPECT_EQ(std::count(trials.begin(), trials.end(), '\n'), 7);
  const PipelineParams best = pipeline_params_from_json(slurp(path("tune") / "best_params.json"));
  EXPECT_GE(best.clustering_threshold, 0.0);

  const CliRun i = run({"infer", "--model", model, "--input", (data() / "feats" / "rec000.feat").string(), "--params",
                     (path("tune") / "best_params.json").string()});
  ASSERT_EQ(i.code, cli::kExitOk) << i.err;
  for (const auto& a : read_rttm(i.out)) EXPECT_EQ(a.recording_id, "rec000");
  const CliRun wav = run({"infer", "--model", model, "--input", (data() / "wav" / "rec000.wav").string(), "--params",
                       (path("tune") / "best_params.json").string()});
  ASSERT_EQ(wav.code, cli::kExitOk) << wav.err;
  EXPECT_EQ(wav.out, i.out);

  const CliRun ad = run({"adapt", "--config", cfg.string(), "--model", model, "--out", path("run_adapt").string()});
  ASSERT_EQ(ad.code, cli::kExitOk) << ad.err;
  EXPECT_TRUE(fs::exists(path("run_adapt") / "model.sdmd"));
}

TEST_F(Cli, ReportIsAPureFunctionOfItsInputs) {
  spit(path("s1.csv"), "model,processing,loss_type,window,oracle_der\nm10,mamba,powerset,10,0.120000\n");
  spit(path("s2.csv"), "model,processing,loss_type,window,oracle_der\nm5,mamba,powerset,5,0.150000\n");
  spit(path("s3.csv"), "model,processing,loss_type,window,oracle_der\nl5,lstm,powerset,5,0.200000\n");
  const CliRun a = run({"report", path("s1.csv").string(), path("s2.csv").string(), path("s3.csv").string(), "--csv",
                     path("fig_a.csv").string()});
  const CliRun b = run({"report", path("s3.csv").string(), path("s1.csv").string(), path("s2.csv").string(), "--csv",
                     path("fig_b.csv").string()});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(path("fig_a.csv")), slurp(path("fig_b.csv")));
  EXPECT_EQ(slurp(path("fig_a.csv")),
            "processing,loss_type,window,oracle_der\nlstm,powerset,5,0.200000\nmamba,powerset,5,0.150000\n"
            "mamba,powerset,10,0.120000\n");
  EXPECT_NE(a.out.find("| m10 | mamba | powerset | 10 | 12.00 |"), std::string::npos);
  spit(path("junk.csv"), "not,a,summary\n");
  EXPECT_EQ(run({"report", path("junk.csv").string()}).code, cli::kExitData);
}

}  // namespace
}  // namespace eendvc
