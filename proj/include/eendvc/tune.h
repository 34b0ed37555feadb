#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eendvc/pipeline.h"

namespace eendvc {

struct SearchSpace {
  double threshold_min = 0.0;
  double threshold_max = 2.0;
  int min_cluster_size_min = 1;
  int min_cluster_size_max = 30;

  void validate() const;
  bool contains(const PipelineParams& p) const;
};

enum class TrialStatus { kOk, kFailed };

struct Trial {
  int index = 0;
  PipelineParams params;
  double der = 0.0;  // meaningful only when status == kOk
  TrialStatus status = TrialStatus::kOk;
  std::string error;
  std::uint64_t seed = 0;
};

struct TuneOptions {
  int budget = 300;
  std::uint64_t seed = 0;
  // Fraction of the budget spent on uniform exploration; the rest refines
  // around the incumbent in boxes that halve every round.
  double explore_fraction = 0.6;
  bool refine = true;
};

struct TuneResult {
  Trial best;
  std::vector<Trial> trials;  // ordered by index

  std::string trial_log_csv() const;  // index,threshold,min_cluster_size,der,status
};

// Evaluates candidate clustering parameters (typically macro pipeline DER);
// throwing marks the trial failed. Only the clustering fields of `base` are
// overwritten in candidates.
using Objective = std::function<double(const PipelineParams&)>;

// Returns the lowest-DER trial; ties are broken by the median clustering
// threshold among the tied trials.
TuneResult tune(const Objective& evaluate, const SearchSpace& space, const TuneOptions& options,
                const PipelineParams& base = {});

}  // namespace eendvc
