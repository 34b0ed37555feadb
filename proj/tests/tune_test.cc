#include "eendvc/tune.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "eendvc/error.h"

namespace eendvc {
namespace {

double bowl(const PipelineParams& p) {
  return std::pow(p.clustering_threshold - 0.73, 2) + 0.01 * std::abs(p.min_cluster_size - 4);
}

TEST(Tune, BudgetOneReturnsTheSingleTrial) {
  TuneOptions o;
  o.budget = 1;
  const TuneResult r = tune(bowl, SearchSpace{}, o);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best.index, r.trials[0].index);
  EXPECT_EQ(r.best.der, r.trials[0].der);
}

TEST(Tune, FindsTheOptimumOfAConvexObjective) {
  TuneOptions o;
  o.seed = 12;
  const TuneResult r = tune([](const PipelineParams& p) { return std::pow(p.clustering_threshold - 0.73, 2); },
                            SearchSpace{}, o);
  EXPECT_EQ(r.trials.size(), 300u);
  EXPECT_NEAR(r.best.params.clustering_threshold, 0.73, 0.05 * 0.73);
  const TuneResult two = tune(bowl, SearchSpace{}, o);
  EXPECT_NEAR(two.best.params.clustering_threshold, 0.73, 0.05 * 0.73);
  EXPECT_EQ(two.best.params.min_cluster_size, 4);
}

TEST(Tune, SameSeedSameTrials) {
  TuneOptions o;
  o.budget = 40;
  o.seed = 5;
  const TuneResult a = tune(bowl, SearchSpace{}, o), b = tune(bowl, SearchSpace{}, o);
  EXPECT_EQ(a.trial_log_csv(), b.trial_log_csv());
  o.seed = 6;
  EXPECT_NE(tune(bowl, SearchSpace{}, o).trial_log_csv(), a.trial_log_csv());
}

TEST(Tune, TrialsStayInsideTheSpaceAndBestIsTheMinimum) {
  SearchSpace space;
  space.threshold_min = 0.2;
  space.threshold_max = 0.9;
  space.min_cluster_size_min = 2;
  space.min_cluster_size_max = 5;
  TuneOptions o;
  o.budget = 120;
  o.seed = 7;
  const TuneResult r = tune(bowl, space, o);
  double lowest = INFINITY;
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    EXPECT_EQ(r.trials[i].index, static_cast<int>(i));
    EXPECT_TRUE(space.contains(r.trials[i].params));
    lowest = std::min(lowest, r.trials[i].der);
  }
  EXPECT_EQ(r.best.der, lowest);
}

TEST(Tune, OnlyClusteringFieldsChange) {
  PipelineParams base;
  base.hop = 3.0;
  base.min_embed_duration = 0.7;
  TuneOptions o;
  o.budget = 10;
  const TuneResult r = tune(bowl, SearchSpace{}, o, base);
  for (const auto& t : r.trials) {
    EXPECT_EQ(t.params.hop, 3.0);
    EXPECT_EQ(t.params.min_embed_duration, 0.7);
  }
}

TEST(Tune, FailedTrialsAreLoggedAndSkipped) {
  TuneOptions o;
  o.budget = 60;
  o.seed = 2;
  const TuneResult r = tune(
      [](const PipelineParams& p) {
        if (p.clustering_threshold > 1.0) throw NumericalError("diverged");
        if (p.min_cluster_size > 25) return std::nan("");
        return bowl(p);
      },
      SearchSpace{}, o);
  int failed = 0;
  for (const auto& t : r.trials) failed += t.status == TrialStatus::kFailed;
  EXPECT_GT(failed, 0);
  EXPECT_EQ(r.best.status, TrialStatus::kOk);
  EXPECT_LE(r.best.params.clustering_threshold, 1.0);
  EXPECT_NE(r.trial_log_csv().find("failed"), std::string::npos);
}

TEST(Tune, AllFailedIsAnError) {
  TuneOptions o;
  o.budget = 5;
  EXPECT_THROW(tune([](const PipelineParams&) -> double { throw FormatError("no"); }, SearchSpace{}, o),
               NumericalError);
}

TEST(Tune, PlateauTiesPickTheMedianThreshold) {
  TuneOptions o;
  o.budget = 200;
  o.seed = 9;
  const TuneResult r =
      tune([](const PipelineParams& p) { return p.clustering_threshold < 0.2 || p.clustering_threshold > 1.0 ? 1.0 : 0.0; },
           SearchSpace{}, o);
  EXPECT_EQ(r.best.der, 0.0);
  EXPECT_NEAR(r.best.params.clustering_threshold, 0.6, 0.1);
}

TEST(Tune, InvalidInputsAreRejected) {
  TuneOptions o;
  o.budget = 0;
  EXPECT_THROW(tune(bowl, SearchSpace{}, o), ConfigError);
  SearchSpace s;
  s.threshold_max = 2.5;
  EXPECT_THROW(tune(bowl, s, TuneOptions{}), ConfigError);
}

TEST(Tune, TrialLogHeader) {
  TuneOptions o;
  o.budget = 3;
  const std::string csv = tune(bowl, SearchSpace{}, o).trial_log_csv();
  EXPECT_EQ(csv.rfind("index,threshold,min_cluster_size,der,status\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

}  // namespace
}  // namespace eendvc
