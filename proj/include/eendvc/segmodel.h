#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "eendvc/autograd.h"
#include "eendvc/labels.h"
#include "eendvc/seqnet.h"

namespace eendvc {

enum class Processing { kLstm, kMamba };
enum class LossType { kMultilabel, kPowerset };

const char* to_string(Processing p);
const char* to_string(LossType l);
Processing parse_processing(const std::string& s);
LossType parse_loss_type(const std::string& s);

// Local segmentation network: [reduction linear ->] processing module ->
// two 128-wide linear layers (leaky ReLU) -> linear to C classes.
struct ModelConfig {
  Processing processing = Processing::kMamba;
  double window = 10.0;  // seconds covered by one local window
  int max_speakers = 3;  // N
  int max_simultaneous = 2;  // K (powerset only)
  LossType loss_type = LossType::kPowerset;
  int input_dim = 40;
  // mamba path
  int d_model = 64;
  int n_blocks = 2;
  int d_state = 16;
  int expand = 2;
  int d_conv = 4;
  // lstm path
  int lstm_layers = 4;
  int lstm_hidden = 128;
  int head_hidden = 128;
  std::uint64_t seed = 0;

  int num_classes() const;  // C
  void validate() const;

  // Full-size configurations (768-dim input features).
  static ModelConfig full_mamba();
  static ModelConfig full_lstm();
};

std::string config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const std::string& text);

class SegmentationModel {
 public:
  explicit SegmentationModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int num_classes() const { return config_.num_classes(); }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }
  const std::optional<PowersetTable>& powerset() const { return powerset_; }
  std::size_t num_parameters() const { return params_.num_trainable_values(); }

  // Logits (T' x C) on a graph; inputs are normalized with the stored
  // feature statistics first.
  ad::Var logits(ad::Graph& g, const Matrix& features) const;

  // Sets the fixed input normalization (per-dimension mean and 1/std).
  void set_input_normalization(const RowVector& mean, const RowVector& inv_std);

 private:
  ModelConfig config_;
  ad::ParamStore params_;
  std::optional<PowersetTable> powerset_;
  int norm_mean_ = -1, norm_scale_ = -1;
  Linear reduce_;
  std::vector<ExtBiMamba> blocks_;
  BiLstm lstm_;
  Linear head1_, head2_, classifier_;
};

SegmentationModel build_model(const ModelConfig& config);

// Frame-wise probabilities: sigmoid per speaker (multilabel) or softmax over
// classes (powerset).
Matrix segment_forward(const SegmentationModel& model, const Matrix& features);
Matrix probabilities_from_logits(const Matrix& logits, LossType loss_type);

// Fits the input normalization on a set of feature matrices.
void fit_input_normalization(SegmentationModel& model, std::span<const FrameMatrix> features);

// "SDMD" checkpoint: u32 version, u32-length config JSON, u32 tensor count,
// then per tensor u32 name length, name, u32 rank, u32 dims, f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_model(const std::string& path, const SegmentationModel& model);
SegmentationModel load_model(const std::string& path);
std::string encode_model(const SegmentationModel& model);
SegmentationModel decode_model(std::string_view bytes);

}  // namespace eendvc
