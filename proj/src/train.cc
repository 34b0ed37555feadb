#include "eendvc/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>

#include "eendvc/error.h"
#include "eendvc/pipeline.h"

namespace eendvc {
namespace {

Index window_frames(const SegmentationModel& model, double frame_rate) {
  return std::max<Index>(1, static_cast<Index>(std::llround(model.config().window * frame_rate)));
}

std::vector<int> permuted_classes(const PowersetTable& table, const std::vector<int>& classes,
                                  const std::vector<int>& perm) {
  std::vector<int> out(classes.size());
  for (std::size_t t = 0; t < classes.size(); ++t) {
    std::uint32_t m = 0;
    for (int r : table.members(classes[t])) m |= 1u << perm[static_cast<std::size_t>(r)];
    out[t] = table.class_of_mask(m);
  }
  return out;
}

// Uniform over corpora, then over window positions within a corpus.
class WindowSampler {
 public:
  WindowSampler(const std::vector<LabeledRecording>& data, Index frames) : data_(data), frames_(frames) {
    std::map<std::string, std::size_t> corpus_index;
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto [it, inserted] = corpus_index.emplace(data[i].corpus, corpora_.size());
      if (inserted) {
        corpora_.emplace_back();
        weights_.emplace_back();
      }
      corpora_[it->second].push_back(i);
      const Index T = data[i].features.num_frames();
      weights_[it->second].push_back(static_cast<double>(std::max<Index>(1, T - frames + 1)));
    }
  }

  struct Pick {
    std::size_t recording;
    Index first_frame;
    Index num_frames;
  };

  Pick operator()(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> corpus_dist(0, corpora_.size() - 1);
    const std::size_t c = corpus_dist(rng);
    std::discrete_distribution<std::size_t> rec_dist(weights_[c].begin(), weights_[c].end());
    const std::size_t r = corpora_[c][rec_dist(rng)];
    const Index T = data_[r].features.num_frames();
    if (T <= frames_) return {r, 0, T};
    std::uniform_int_distribution<Index> offset(0, T - frames_);
    return {r, offset(rng), frames_};
  }

 private:
  const std::vector<LabeledRecording>& data_;
  Index frames_;
  std::vector<std::vector<std::size_t>> corpora_;
  std::vector<std::vector<double>> weights_;
};

void check_data(const std::vector<LabeledRecording>& data, const SegmentationModel& model, const char* what) {
  if (data.empty()) throw ConfigError(std::string(what) + " set is empty");
  for (const auto& r : data) {
    if (r.features.dim() != model.config().input_dim) {
      throw ConfigError(std::string(what) + " features of '" + r.reference.recording_id + "' have dimension " +
                        std::to_string(r.features.dim()));
    }
  }
}

// One optimization step over a sampled batch; returns the mean batch loss.
double train_step(SegmentationModel& model, const std::vector<LabeledRecording>& data, const WindowSampler& sampler,
                  std::mt19937_64& rng, AdamOptimizer& opt, const TrainConfig& cfg, double lr) {
  auto& store = model.params();
  std::vector<Matrix> grads;
  double loss_sum = 0.0;
  for (int b = 0; b < cfg.batch; ++b) {
    const auto pick = sampler(rng);
    const auto& rec = data[pick.recording];
    const Matrix feats = rec.features.data.middleRows(pick.first_frame, pick.num_frames);
    const Matrix targets = window_targets(rec.reference, pick.first_frame, pick.num_frames, rec.features.frame_rate,
                                          model.config().max_speakers);
    ad::Graph g(&store);
    ad::Var loss = window_loss(g, model, feats, targets);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite training loss on '" + rec.reference.recording_id + "' frame " +
                           std::to_string(pick.first_frame));
    }
    loss_sum += value;
    g.backward(loss);
    auto pg = g.param_grads();
    if (grads.empty()) {
      grads = std::move(pg);
    } else {
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += pg[i];
    }
  }
  for (auto& gr : grads) gr /= static_cast<double>(cfg.batch);
  clip_gradients(grads, store, cfg.grad_clip);
  opt.step(store, grads, lr);
  return loss_sum / cfg.batch;
}

}  // namespace

Matrix window_targets(const Annotation& reference, Index first_frame, Index num_frames, double frame_rate,
                      int max_speakers) {
  const auto labels = reference.labels();
  const FrameMatrix all = annotation_to_frames(reference, static_cast<double>(first_frame) / frame_rate, num_frames,
                                               frame_rate, labels);
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const Eigen::RowVectorXd activity = all.data.colwise().sum();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return activity[static_cast<Index>(a)] > activity[static_cast<Index>(b)];
  });
  Matrix out = Matrix::Zero(num_frames, max_speakers);
  int slot = 0;
  for (std::size_t i : order) {
    if (slot == max_speakers || activity[static_cast<Index>(i)] == 0.0) break;
    out.col(slot++) = all.data.col(static_cast<Index>(i));
  }
  return out;
}

namespace {

ad::Var loss_from_logits(const SegmentationModel& model, ad::Var logits, const Matrix& targets) {
  if (model.config().loss_type == LossType::kMultilabel) {
    const Matrix probs = probabilities_from_logits(logits.value(), LossType::kMultilabel);
    const PitResult pit = pit_bce(probs, targets);
    return ad::bce_with_logits(logits, permute_reference(targets, pit.permutation));
  }
  const PowersetTable& table = *model.powerset();
  ad::Var logp = ad::log_softmax(logits);
  const PitResult pit = pit_powerset_ce_log(logp.value(), targets, table);
  const std::vector<int> classes = multilabel_to_powerset(table, targets);
  return ad::nll(logp, permuted_classes(table, classes, pit.permutation));
}

}  // namespace

ad::Var window_loss(ad::Graph& g, const SegmentationModel& model, const Matrix& features, const Matrix& targets) {
  return loss_from_logits(model, model.logits(g, features), targets);
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_local_der,lr\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.8g\n", e.epoch, e.train_loss, e.val_loss, e.val_local_der,
                  e.lr);
    out += buf;
  }
  return out;
}

ValidationResult validate_model(const SegmentationModel& model, const std::vector<LabeledRecording>& data) {
  double loss_sum = 0.0;
  long count = 0;
  FrameErrors errors;
  const PowersetTable* table = model.powerset() ? &*model.powerset() : nullptr;
  for (const auto& rec : data) {
    const Index n = window_frames(model, rec.features.frame_rate);
    const Index T = rec.features.num_frames();
    for (Index start = 0; start < T; start += n) {
      const Index len = std::min(n, T - start);
      const Matrix feats = rec.features.data.middleRows(start, len);
      const Matrix targets =
          window_targets(rec.reference, start, len, rec.features.frame_rate, model.config().max_speakers);
      ad::Graph g(&model.params());
      ad::Var logits = model.logits(g, feats);
      loss_sum += loss_from_logits(model, logits, targets).value()(0, 0);
      ++count;
      const Matrix probs = probabilities_from_logits(logits.value(), model.config().loss_type);
      const Matrix hyp = binarize(probs, model.config().loss_type, table);
      const std::vector<int> assign = oracle_assignment(hyp, targets);
      Index width = targets.cols();
      for (int a : assign) width = std::max<Index>(width, a + 1);
      Matrix aligned = Matrix::Zero(len, width);
      Matrix padded = Matrix::Zero(len, width);
      padded.leftCols(targets.cols()) = targets;
      for (Index s = 0; s < hyp.cols(); ++s) aligned.col(assign[static_cast<std::size_t>(s)]) = hyp.col(s);
      errors += frame_errors(aligned, padded);
    }
  }
  ValidationResult res;
  res.loss = count > 0 ? loss_sum / static_cast<double>(count) : 0.0;
  res.local_der = errors.der();
  return res;
}

AdamOptimizer::AdamOptimizer(const ad::ParamStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamOptimizer::step(ad::ParamStore& store, const std::vector<Matrix>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    const Matrix& g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    store[i].value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(std::vector<Matrix>& grads, const ad::ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) throw NumericalError("non-finite gradient for parameter '" + store[i].name + "'");
    sq += grads[i].squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

namespace {

using LrFn = std::function<double(double epoch)>;

// Shared loop of training and adaptation. `patience` < 0 disables early
// stopping.
SegmentationModel run_training(const SegmentationModel& model, const std::vector<LabeledRecording>& train,
                               const std::vector<LabeledRecording>& val, const TrainConfig& config,
                               const LrFn& lr_fn, int patience, TrainHistory* history, const ProgressFn& progress) {
  config.validate();
  check_data(train, model, "training");
  check_data(val, model, "validation");
  TrainHistory local;
  TrainHistory& hist = history ? *history : local;
  hist = TrainHistory{};

  SegmentationModel current = model;
  SegmentationModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  if (patience >= 0) {
    best_loss = validate_model(model, val).loss;
    hist.initial_val_loss = best_loss;
  }
  if (config.epochs == 0) return best;

  const Index frames = window_frames(model, train.front().features.frame_rate);
  WindowSampler sampler(train, frames);
  std::mt19937_64 rng(config.seed);
  AdamOptimizer opt(current.params(), config.adam_beta1, config.adam_beta2, config.adam_eps);
  int since_improvement = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (int s = 0; s < config.steps_per_epoch; ++s) {
      const double e = (epoch - 1) + static_cast<double>(s) / config.steps_per_epoch;
      lr = lr_fn(e);
      const double loss = train_step(current, train, sampler, rng, opt, config, lr);
      hist.step_losses.push_back(loss);
      hist.step_lrs.push_back(lr);
      epoch_loss += loss;
    }
    const ValidationResult v = validate_model(current, val);
    EpochRecord rec{epoch, epoch_loss / config.steps_per_epoch, v.loss, v.local_der, lr};
    hist.epochs.push_back(rec);
    if (progress) progress(rec);
    if (v.loss < best_loss) {
      best_loss = v.loss;
      best = current;
      hist.best_epoch = epoch;
      since_improvement = 0;
    } else if (patience >= 0 && ++since_improvement >= std::max(patience, 1)) {
      break;
    }
  }
  best.params().round_to_f32();
  return best;
}

}  // namespace

SegmentationModel train_segmentation(const SegmentationModel& model, const std::vector<LabeledRecording>& train,
                                     const std::vector<LabeledRecording>& val, const TrainConfig& config,
                                     TrainHistory* history, const ProgressFn& progress) {
  return run_training(
      model, train, val, config, [&](double e) { return lr_at(config, e); }, -1, history, progress);
}

SegmentationModel adapt(const SegmentationModel& model, const std::vector<LabeledRecording>& train,
                        const std::vector<LabeledRecording>& val, const TrainConfig& config, TrainHistory* history,
                        const ProgressFn& progress) {
  return run_training(
      model, train, val, config, [&](double) { return config.adapt_lr; }, config.adapt_patience, history, progress);
}

}  // namespace eendvc
