#pragma once

#include <span>
#include <string>
#include <vector>

#include "eendvc/annotation.h"
#include "eendvc/segmodel.h"

namespace eendvc {

struct PipelineParams {
  double hop = -1.0;  // seconds; <= 0 selects W / 2
  double clustering_threshold = 0.5;  // cosine distance cutoff, [0, 2]
  int min_cluster_size = 1;
  double min_embed_duration = 0.2;  // seconds

  double resolved_hop(double window) const { return hop > 0.0 ? hop : window / 2.0; }
  void validate(double window) const;
};

// Output of the local model on one window.
struct LocalWindowOutput {
  TimeSpan span;
  Index first_frame = 0;  // index into the recording frame grid
  Matrix probabilities;   // T' x C
  Matrix labels;          // T' x N binary (multilabel space)
  Matrix activity;        // T' x N multilabel-space scores averaged during aggregation

  Index num_frames() const { return labels.rows(); }
};

// [i hop, i hop + W) while the start does not pass duration - W, plus a final
// window right-aligned at `duration` when the tail is not covered. A recording
// shorter than W yields the single span [0, duration).
std::vector<TimeSpan> slide_windows(double duration, double window, double hop);

// Non-overlapping tiling [i W, min((i + 1) W, duration)).
std::vector<TimeSpan> tile_windows(double duration, double window);

// Multilabel: p >= 0.5. Powerset: per-frame argmax class mapped to its speakers.
Matrix binarize(const Matrix& probs, LossType loss_type, const PowersetTable* table = nullptr);

// Scores used for cross-window averaging: the sigmoid outputs for multilabel
// models, the binarized argmax for powerset models.
Matrix multilabel_activity(const Matrix& probs, LossType loss_type, const PowersetTable* table = nullptr);

// Runs the local model on every span of `features`.
std::vector<LocalWindowOutput> segment_windows(const FrameMatrix& features, const SegmentationModel& model,
                                               std::span<const TimeSpan> spans);

// Turns a set of frames of one recording into a fixed-size vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(const FrameMatrix& recording, std::span<const Index> frames) const = 0;
};

// Mean of the selected feature frames after subtracting the recording-level
// feature mean.
class MeanPoolEmbedder : public Embedder {
 public:
  Vector embed(const FrameMatrix& recording, std::span<const Index> frames) const override;
};

struct Embedding {
  Vector vector;  // unit norm
  int window = 0;
  int slot = 0;
  double duration = 0.0;  // seconds of single-speaker speech pooled
};

// One embedding per (window, slot) pooled over frames where that slot is the
// only active one; omitted when that covers less than min_duration.
std::vector<Embedding> extract_embeddings(const FrameMatrix& features, std::span<const LocalWindowOutput> windows,
                                          const Embedder& embedder, double min_duration);

double cosine_distance(const Vector& a, const Vector& b);

// Centroid-linkage AHC on cosine distance; see pipeline.cc for the
// small-cluster reassignment rule. Cluster ids are 0..k-1 in order of first
// member.
std::vector<int> ahc_cluster(std::span<const Vector> embeddings, double threshold, int min_cluster_size);

// cluster_map[w][s] = global speaker of slot s in window w, -1 if dropped.
using ClusterMap = std::vector<std::vector<int>>;

// Builds the map from clustered embeddings. Active slots without an
// embedding are pooled over all their active frames and sent to the nearest
// cluster centroid; inactive slots are dropped.
ClusterMap complete_cluster_map(const FrameMatrix& features, std::span<const LocalWindowOutput> windows,
                                std::span<const Embedding> embeddings, std::span<const int> cluster_ids,
                                const Embedder& embedder);

// Per global speaker and frame: average activity over every window covering
// the frame (slots sharing a speaker within a window are max-combined), then
// threshold at 0.5.
Annotation align_and_aggregate(std::span<const LocalWindowOutput> windows, const ClusterMap& cluster_map,
                               Index num_frames, double frame_rate, const std::string& recording_id = {});

// Windows, embeddings and clustering inputs of one recording; computed once
// and reused across clustering parameter trials.
struct SegmentedRecording {
  std::string recording_id;
  FrameMatrix features;
  std::vector<LocalWindowOutput> windows;
  std::vector<Embedding> embeddings;
};

SegmentedRecording segment_recording(const FrameMatrix& features, const SegmentationModel& model,
                                     const Embedder& embedder, const PipelineParams& params,
                                     const std::string& recording_id = {});
Annotation cluster_recording(const SegmentedRecording& rec, const Embedder& embedder, const PipelineParams& params);

Annotation run_pipeline(const FrameMatrix& features, const SegmentationModel& model, const Embedder& embedder,
                        const PipelineParams& params, const std::string& recording_id = {});

// Per window, relabels local slots with the reference-speaker assignment that
// minimizes frame mismatch (ties -> lexicographically smallest assignment) and
// concatenates. Windows must not overlap. Slots matched to no reference
// speaker keep their activity under "unmatched<k>" labels.
Annotation oracle_stitch(std::span<const LocalWindowOutput> windows, const Annotation& reference,
                         double frame_rate, const std::string& recording_id = {});

// Per-window assignment used by oracle_stitch: assignment[slot] = column of
// the reference (columns >= ref.cols() mean "no speaker").
std::vector<int> oracle_assignment(const Matrix& local_labels, const Matrix& ref_labels);

}  // namespace eendvc
