#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eendvc/annotation.h"
#include "eendvc/types.h"

namespace eendvc {

// All speaker subsets of size <= K over N slots, ordered by size and then
// lexicographically; class 0 is silence.
class PowersetTable {
 public:
  PowersetTable(int num_speakers, int max_simultaneous);

  int num_speakers() const { return n_; }
  int max_simultaneous() const { return k_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<int>& members(int cls) const { return classes_.at(static_cast<std::size_t>(cls)); }
  // Class index of a speaker bitmask, -1 if the subset is larger than K.
  int class_of_mask(std::uint32_t mask) const;
  std::uint32_t mask_of(int cls) const { return masks_.at(static_cast<std::size_t>(cls)); }

 private:
  int n_, k_;
  std::vector<std::vector<int>> classes_;
  std::vector<std::uint32_t> masks_;
  std::vector<int> index_by_mask_;
};

PowersetTable powerset_table(int num_speakers, int max_simultaneous);

// Number of classes sum_{i=0..K} C(N, i).
long powerset_size(int num_speakers, int max_simultaneous);

// Frames with more than K active speakers keep the K speakers that are
// active longest over the whole matrix (ties -> lower index).
std::vector<int> multilabel_to_powerset(const PowersetTable& table, const Matrix& labels);
Matrix powerset_to_multilabel(const PowersetTable& table, std::span<const int> classes);

struct PitResult {
  double loss = 0.0;
  // permutation[r] = predicted slot matched with reference speaker r.
  std::vector<int> permutation;
};

inline constexpr double kProbClamp = 1e-7;

// Permutation-free mean BCE. Uses optimal assignment on the N x N
// reference-column / prediction-column cost matrix.
PitResult pit_bce(const Matrix& pred, const Matrix& ref);

// Permutation-free powerset cross entropy, exhaustive over N! permutations.
PitResult pit_powerset_ce(const Matrix& pred, const Matrix& ref, const PowersetTable& table);
// Same, from log-probabilities (used in training to avoid exp/log round trips).
PitResult pit_powerset_ce_log(const Matrix& log_pred, const Matrix& ref, const PowersetTable& table);

// Reference columns rearranged so that column permutation[r] holds ref[:, r].
Matrix permute_reference(const Matrix& ref, std::span<const int> permutation);

struct CapacityStats {
  int num_speakers = 0;      // N
  int max_simultaneous = 0;  // K
  std::size_t num_windows = 0;
  // coverage_n[n] = fraction of windows with <= n distinct speakers.
  std::vector<double> coverage_n;
  // coverage_k[k] = fraction of windows whose peak overlap is <= k.
  std::vector<double> coverage_k;
};

// Tiles every annotation into non-overlapping windows of `window` seconds
// (the final partial window included) and picks the smallest N and K that
// cover at least `coverage_target` of the windows.
CapacityStats speaker_capacity_stats(std::span<const Annotation> annotations, double window,
                                     double coverage_target);

}  // namespace eendvc
