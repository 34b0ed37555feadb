#include "eendvc/segmodel.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "eendvc/bytes.h"
#include "eendvc/error.h"
#include "json.hpp"

namespace eendvc {

using nlohmann::json;

const char* to_string(Processing p) { return p == Processing::kLstm ? "lstm" : "mamba"; }
const char* to_string(LossType l) { return l == LossType::kMultilabel ? "multilabel" : "powerset"; }

Processing parse_processing(const std::string& s) {
  if (s == "lstm") return Processing::kLstm;
  if (s == "mamba") return Processing::kMamba;
  throw ConfigError("unknown processing module '" + s + "' (expected lstm or mamba)");
}

LossType parse_loss_type(const std::string& s) {
  if (s == "multilabel") return LossType::kMultilabel;
  if (s == "powerset") return LossType::kPowerset;
  throw ConfigError("unknown loss type '" + s + "' (expected multilabel or powerset)");
}

int ModelConfig::num_classes() const {
  if (loss_type == LossType::kMultilabel) return max_speakers;
  return static_cast<int>(powerset_size(max_speakers, max_simultaneous));
}

void ModelConfig::validate() const {
  if (!(window > 0.0)) throw ConfigError("window must be positive");
  if (max_speakers < 1) throw ConfigError("max_speakers must be >= 1");
  if (input_dim < 1 || head_hidden < 1) throw ConfigError("input_dim and head_hidden must be >= 1");
  if (loss_type == LossType::kPowerset) {
    if (max_simultaneous < 1 || max_simultaneous > max_speakers) {
      throw ConfigError("powerset requires 1 <= K <= N (K=" + std::to_string(max_simultaneous) +
                        ", N=" + std::to_string(max_speakers) + ")");
    }
    if (max_speakers > 8) throw ConfigError("powerset with N > 8 is not supported");
  }
  if (processing == Processing::kMamba) {
    if (d_model < 1 || n_blocks < 1 || d_state < 1 || expand < 1 || d_conv < 1) {
      throw ConfigError("mamba sizes must be positive");
    }
  } else {
    if (lstm_layers < 1 || lstm_hidden < 1) throw ConfigError("lstm sizes must be positive");
  }
}

ModelConfig ModelConfig::full_mamba() {
  ModelConfig c;
  c.processing = Processing::kMamba;
  c.input_dim = 768;
  c.d_model = 256;
  c.n_blocks = 7;
  c.d_state = 64;
  c.max_speakers = 4;
  c.max_simultaneous = 2;
  return c;
}

ModelConfig ModelConfig::full_lstm() {
  ModelConfig c;
  c.processing = Processing::kLstm;
  c.input_dim = 768;
  c.lstm_layers = 4;
  c.lstm_hidden = 128;
  c.max_speakers = 4;
  c.max_simultaneous = 2;
  return c;
}

std::string config_to_json(const ModelConfig& c) {
  json j = {
      {"processing", to_string(c.processing)},
      {"window", c.window},
      {"max_speakers", c.max_speakers},
      {"max_simultaneous", c.max_simultaneous},
      {"loss_type", to_string(c.loss_type)},
      {"input_dim", c.input_dim},
      {"d_model", c.d_model},
      {"n_blocks", c.n_blocks},
      {"d_state", c.d_state},
      {"expand", c.expand},
      {"d_conv", c.d_conv},
      {"lstm_layers", c.lstm_layers},
      {"lstm_hidden", c.lstm_hidden},
      {"head_hidden", c.head_hidden},
      {"seed", c.seed},
  };
  return j.dump(2);
}

ModelConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("model config must be an object");
  ModelConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "processing") c.processing = parse_processing(v.get<std::string>());
      else if (k == "window") c.window = v.get<double>();
      else if (k == "max_speakers") c.max_speakers = v.get<int>();
      else if (k == "max_simultaneous") c.max_simultaneous = v.get<int>();
      else if (k == "loss_type") c.loss_type = parse_loss_type(v.get<std::string>());
      else if (k == "input_dim") c.input_dim = v.get<int>();
      else if (k == "d_model") c.d_model = v.get<int>();
      else if (k == "n_blocks") c.n_blocks = v.get<int>();
      else if (k == "d_state") c.d_state = v.get<int>();
      else if (k == "expand") c.expand = v.get<int>();
      else if (k == "d_conv") c.d_conv = v.get<int>();
      else if (k == "lstm_layers") c.lstm_layers = v.get<int>();
      else if (k == "lstm_hidden") c.lstm_hidden = v.get<int>();
      else if (k == "head_hidden") c.head_hidden = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown model config key '" + k + "'");
    } catch (const json::exception& e) {
      throw ParseError("model config key '" + k + "': " + e.what());
    }
  }
  return c;
}

SegmentationModel::SegmentationModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  if (config_.loss_type == LossType::kPowerset) {
    powerset_.emplace(config_.max_speakers, config_.max_simultaneous);
  }
  Initializer init(config_.seed);
  norm_mean_ = params_.add("input.mean", Matrix::Zero(1, config_.input_dim), false);
  norm_scale_ = params_.add("input.scale", Matrix::Ones(1, config_.input_dim), false);
  int width = 0;
  if (config_.processing == Processing::kMamba) {
    reduce_ = Linear(params_, "reduce", config_.input_dim, config_.d_model, true, init);
    MambaBlockConfig mc;
    mc.d_model = config_.d_model;
    mc.d_state = config_.d_state;
    mc.expand = config_.expand;
    mc.d_conv = config_.d_conv;
    for (int b = 0; b < config_.n_blocks; ++b) {
      blocks_.emplace_back(params_, "blocks." + std::to_string(b), mc, init);
    }
    width = config_.d_model;
  } else {
    LstmConfig lc{config_.lstm_layers, config_.lstm_hidden, true};
    lstm_ = BiLstm(params_, "lstm", config_.input_dim, lc, init);
    width = lc.output_width();
  }
  head1_ = Linear(params_, "head.0", width, config_.head_hidden, true, init);
  head2_ = Linear(params_, "head.1", config_.head_hidden, config_.head_hidden, true, init);
  classifier_ = Linear(params_, "classifier", config_.head_hidden, config_.num_classes(), true, init);
}

void SegmentationModel::set_input_normalization(const RowVector& mean, const RowVector& inv_std) {
  if (mean.size() != config_.input_dim || inv_std.size() != config_.input_dim) {
    throw ConfigError("input normalization has wrong dimension");
  }
  params_.value(norm_mean_) = mean.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  params_.value(norm_scale_) = inv_std.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

ad::Var SegmentationModel::logits(ad::Graph& g, const Matrix& features) const {
  if (features.cols() != config_.input_dim) {
    throw ConfigError("features have " + std::to_string(features.cols()) + " dims, model expects " +
                      std::to_string(config_.input_dim));
  }
  if (!features.allFinite()) throw NumericalError("non-finite input features");
  ad::Var x = g.constant(features);
  x = ad::mul_row(ad::add_row(x, ad::scale(g.param(norm_mean_), -1.0)), g.param(norm_scale_));
  if (config_.processing == Processing::kMamba) {
    x = reduce_(g, x);
    for (const auto& b : blocks_) x = b(g, x);
  } else {
    x = lstm_(g, x);
  }
  x = ad::leaky_relu(head1_(g, x));
  x = ad::leaky_relu(head2_(g, x));
  return classifier_(g, x);
}

SegmentationModel build_model(const ModelConfig& config) { return SegmentationModel(config); }

Matrix probabilities_from_logits(const Matrix& z, LossType loss_type) {
  Matrix p(z.rows(), z.cols());
  if (loss_type == LossType::kMultilabel) {
    for (Index i = 0; i < z.size(); ++i) {
      const double x = z.data()[i];
      p.data()[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
  } else {
    for (Index t = 0; t < z.rows(); ++t) {
      const double m = z.row(t).maxCoeff();
      p.row(t) = (z.row(t).array() - m).exp();
      p.row(t) /= p.row(t).sum();
    }
  }
  return p;
}

Matrix segment_forward(const SegmentationModel& model, const Matrix& features) {
  ad::Graph g(&model.params());
  const Matrix z = model.logits(g, features).value();
  if (!z.allFinite()) throw NumericalError("segment_forward: non-finite activations");
  return probabilities_from_logits(z, model.config().loss_type);
}

void fit_input_normalization(SegmentationModel& model, std::span<const FrameMatrix> features) {
  const int F = model.config().input_dim;
  RowVector sum = RowVector::Zero(F), sq = RowVector::Zero(F);
  double n = 0.0;
  for (const auto& f : features) {
    if (f.dim() != F) throw ConfigError("fit_input_normalization: feature dimension mismatch");
    sum += f.data.colwise().sum();
    sq += f.data.array().square().matrix().colwise().sum();
    n += static_cast<double>(f.num_frames());
  }
  if (n < 2) throw ConfigError("fit_input_normalization: not enough frames");
  const RowVector mean = sum / n;
  RowVector inv_std(F);
  for (int c = 0; c < F; ++c) {
    const double var = std::max(sq[c] / n - mean[c] * mean[c], 1e-8);
    inv_std[c] = 1.0 / std::sqrt(var);
  }
  model.set_input_normalization(mean, inv_std);
}

std::string encode_model(const SegmentationModel& model) {
  std::string out = "SDMD";
  bytes::put_u32(out, kCheckpointVersion);
  const std::string cfg = config_to_json(model.config());
  bytes::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto& store = model.params();
  bytes::put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    bytes::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    bytes::put_u32(out, 2);
    bytes::put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    bytes::put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Index i = 0; i < p.value.size(); ++i) bytes::put_f32(out, static_cast<float>(p.value.data()[i]));
  }
  return out;
}

SegmentationModel decode_model(std::string_view data) {
  bytes::Reader r(data);
  if (data.size() < 4 || r.take(4, "magic") != "SDMD") throw FormatError("not a segmentation checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t cfg_len = r.u32();
  const ModelConfig cfg = config_from_json(std::string(r.take(cfg_len, "config")));
  SegmentationModel model(cfg);
  auto& store = model.params();
  const std::uint32_t count = r.u32();
  if (count != store.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(store.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name(r.take(name_len, "tensor name"));
    const int idx = store.index_of(name);
    if (idx < 0) throw FormatError("unexpected tensor '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw FormatError("tensor '" + name + "' has unsupported rank");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    Matrix& v = store.value(idx);
    if (rows != v.rows() || cols != v.cols()) throw FormatError("tensor '" + name + "' has wrong shape");
    for (Index k = 0; k < v.size(); ++k) v.data()[k] = r.f32();
  }
  return model;
}

void save_model(const std::string& path, const SegmentationModel& model) {
  const std::string bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

SegmentationModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_model(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const ParseError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace eendvc
