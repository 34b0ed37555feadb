#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eendvc/annotation.h"
#include "eendvc/metrics.h"
#include "eendvc/segmodel.h"

namespace eendvc {

struct TrainConfig {
  int epochs = 80;
  int steps_per_epoch = 900;  // 72000 steps over 80 epochs
  int batch = 32;
  double lr_peak = 0.002;
  double warmup_epochs = 1.0;
  double cycle_epochs = 2.0;
  double halflife_epochs = 10.0;
  double cycle_floor = 0.01;  // trough = envelope * cycle_floor
  double adapt_lr = 0.00005;
  int adapt_patience = 10;
  double grad_clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Warm-up from 0 to lr_peak over the first epoch, then a triangular wave of
// period cycle_epochs between envelope(e) (at odd epochs) and
// envelope(e) * cycle_floor, envelope(e) = lr_peak * 2^(-(e - 1) / halflife).
double lr_at(const TrainConfig& config, double epoch);
double lr_envelope(const TrainConfig& config, double epoch);

// One annotated recording of a training corpus.
struct LabeledRecording {
  std::string corpus = "default";
  FrameMatrix features;
  Annotation reference;
};

// Reference labels for a window: speakers ordered by activity inside the
// window (ties by label), the N most active kept, missing slots zero-padded.
Matrix window_targets(const Annotation& reference, Index first_frame, Index num_frames, double frame_rate,
                      int max_speakers);

// PIT loss of one window on a graph; returns the 1x1 loss Var.
ad::Var window_loss(ad::Graph& g, const SegmentationModel& model, const Matrix& features, const Matrix& targets);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_local_der = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  std::vector<double> step_lrs;
  int best_epoch = -1;  // -1: the input model was kept
  double initial_val_loss = 0.0;

  std::string to_csv() const;  // epoch,train_loss,val_loss,val_local_der,lr
};

struct ValidationResult {
  double loss = 0.0;
  double local_der = 0.0;  // frame-level DER with per-window oracle permutation
};

// Fixed validation windows: non-overlapping tiles of length W.
ValidationResult validate_model(const SegmentationModel& model, const std::vector<LabeledRecording>& data);

using ProgressFn = std::function<void(const EpochRecord&)>;

// Adam with global-norm clipping and lr_at schedule; one validation per
// epoch; returns the parameters of the epoch with the lowest validation loss.
// Deterministic given config.seed.
SegmentationModel train_segmentation(const SegmentationModel& model, const std::vector<LabeledRecording>& train,
                                     const std::vector<LabeledRecording>& val, const TrainConfig& config,
                                     TrainHistory* history = nullptr, const ProgressFn& progress = {});

// Constant-lr fine-tuning with early stopping after `adapt_patience` epochs
// without validation improvement; returns the best checkpoint (the input
// model when nothing improves).
SegmentationModel adapt(const SegmentationModel& model, const std::vector<LabeledRecording>& train,
                        const std::vector<LabeledRecording>& val, const TrainConfig& config,
                        TrainHistory* history = nullptr, const ProgressFn& progress = {});

// Adam state for a ParamStore.
class AdamOptimizer {
 public:
  AdamOptimizer(const ad::ParamStore& store, double beta1, double beta2, double eps);
  void step(ad::ParamStore& store, const std::vector<Matrix>& grads, double lr);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Scales gradients so that their global L2 norm is at most max_norm;
// returns the norm before clipping. Throws NumericalError naming the first
// parameter with a non-finite gradient.
double clip_gradients(std::vector<Matrix>& grads, const ad::ParamStore& store, double max_norm);

}  // namespace eendvc
