#include "eendvc/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "eendvc/assignment.h"
#include "eendvc/error.h"

namespace eendvc {
namespace {

std::string global_label(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%02d", k);
  return buf;
}

Vector normalized(const Vector& v) {
  const double n = v.norm();
  return n > 0.0 ? Vector(v / n) : v;
}

Index frame_of(double seconds, const FrameMatrix& f) {
  return static_cast<Index>(std::llround((seconds - f.start_time) * f.frame_rate));
}

}  // namespace

void PipelineParams::validate(double window) const {
  const double h = resolved_hop(window);
  if (!(h > 0.0 && h <= window)) throw ConfigError("hop must satisfy 0 < hop <= W");
  if (!(clustering_threshold >= 0.0 && clustering_threshold <= 2.0)) {
    throw ConfigError("clustering_threshold must be in [0, 2]");
  }
  if (min_cluster_size < 1) throw ConfigError("min_cluster_size must be >= 1");
  if (min_embed_duration < 0.0) throw ConfigError("min_embed_duration must be >= 0");
}

std::vector<TimeSpan> slide_windows(double duration, double window, double hop) {
  if (!(hop > 0.0)) throw ConfigError("hop must be positive");
  if (!(window > 0.0)) throw ConfigError("window must be positive");
  std::vector<TimeSpan> spans;
  if (duration <= 0.0) return spans;
  if (duration <= window) return {{0.0, duration}};
  const double eps = 1e-9;
  for (long i = 0;; ++i) {
    const double start = static_cast<double>(i) * hop;
    if (start > duration - window + eps) break;
    spans.push_back({start, start + window});
  }
  if (spans.back().end < duration - eps) spans.push_back({duration - window, duration});
  return spans;
}

std::vector<TimeSpan> tile_windows(double duration, double window) {
  if (!(window > 0.0)) throw ConfigError("window must be positive");
  std::vector<TimeSpan> spans;
  for (long i = 0; static_cast<double>(i) * window < duration - 1e-9; ++i) {
    const double start = static_cast<double>(i) * window;
    spans.push_back({start, std::min(start + window, duration)});
  }
  return spans;
}

Matrix binarize(const Matrix& probs, LossType loss_type, const PowersetTable* table) {
  if (loss_type == LossType::kMultilabel) {
    return (probs.array() >= 0.5).cast<double>().matrix();
  }
  if (!table) throw ConfigError("binarize: powerset output needs a PowersetTable");
  if (probs.cols() != table->num_classes()) throw ConfigError("binarize: class count mismatch");
  std::vector<int> classes(static_cast<std::size_t>(probs.rows()));
  for (Index t = 0; t < probs.rows(); ++t) {
    Index best = 0;
    probs.row(t).maxCoeff(&best);
    classes[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return powerset_to_multilabel(*table, classes);
}

Matrix multilabel_activity(const Matrix& probs, LossType loss_type, const PowersetTable* table) {
  if (loss_type == LossType::kMultilabel) return probs;
  return binarize(probs, loss_type, table);
}

std::vector<LocalWindowOutput> segment_windows(const FrameMatrix& features, const SegmentationModel& model,
                                               std::span<const TimeSpan> spans) {
  std::vector<LocalWindowOutput> out;
  const Index T = features.num_frames();
  const auto& cfg = model.config();
  const PowersetTable* table = model.powerset() ? &*model.powerset() : nullptr;
  for (const auto& span : spans) {
    LocalWindowOutput w;
    w.span = span;
    w.first_frame = std::clamp<Index>(frame_of(span.start, features), 0, T);
    const Index last = std::clamp<Index>(frame_of(span.end, features), w.first_frame, T);
    const Index n = last - w.first_frame;
    if (n <= 0) continue;
    w.probabilities = segment_forward(model, features.data.middleRows(w.first_frame, n));
    w.labels = binarize(w.probabilities, cfg.loss_type, table);
    w.activity = multilabel_activity(w.probabilities, cfg.loss_type, table);
    out.push_back(std::move(w));
  }
  return out;
}

Vector MeanPoolEmbedder::embed(const FrameMatrix& recording, std::span<const Index> frames) const {
  const Index F = recording.dim();
  Vector out = Vector::Zero(F);
  if (frames.empty() || recording.num_frames() == 0) return out;
  const Vector mean = recording.data.colwise().mean().transpose();
  for (Index t : frames) out += recording.data.row(t).transpose();
  out /= static_cast<double>(frames.size());
  return out - mean;
}

std::vector<Embedding> extract_embeddings(const FrameMatrix& features, std::span<const LocalWindowOutput> windows,
                                          const Embedder& embedder, double min_duration) {
  std::vector<Embedding> out;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const Matrix& L = win.labels;
    for (Index s = 0; s < L.cols(); ++s) {
      std::vector<Index> frames;
      for (Index t = 0; t < L.rows(); ++t) {
        if (L(t, s) >= 0.5 && L.row(t).sum() < 1.5) frames.push_back(win.first_frame + t);
      }
      const double duration = static_cast<double>(frames.size()) / features.frame_rate;
      if (frames.empty() || duration < min_duration) continue;
      Vector v = embedder.embed(features, frames);
      const double norm = v.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) continue;
      out.push_back({v / norm, static_cast<int>(w), static_cast<int>(s), duration});
    }
  }
  return out;
}

double cosine_distance(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::max(0.0, 1.0 - a.dot(b) / (na * nb));
}

std::vector<int> ahc_cluster(std::span<const Vector> embeddings, double threshold, int min_cluster_size) {
  if (embeddings.empty()) throw ConfigError("ahc_cluster: no embeddings");
  if (min_cluster_size < 1) throw ConfigError("ahc_cluster: min_cluster_size must be >= 1");
  const std::size_t n = embeddings.size();
  struct Cluster {
    std::vector<std::size_t> members;
    Vector sum;
    Vector centroid;
    bool alive = true;
  };
  std::vector<Cluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i) {
    clusters[i].members = {i};
    clusters[i].sum = normalized(embeddings[i]);
    clusters[i].centroid = clusters[i].sum;
  }
  const double inf = std::numeric_limits<double>::infinity();
  Matrix dist = Matrix::Constant(static_cast<Index>(n), static_cast<Index>(n), inf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist(static_cast<Index>(i), static_cast<Index>(j)) = cosine_distance(clusters[i].centroid, clusters[j].centroid);
    }
  }
  while (true) {
    double best = inf;
    Index bi = -1, bj = -1;
    for (Index i = 0; i < static_cast<Index>(n); ++i) {
      if (!clusters[static_cast<std::size_t>(i)].alive) continue;
      for (Index j = i + 1; j < static_cast<Index>(n); ++j) {
        if (clusters[static_cast<std::size_t>(j)].alive && dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0 || !(best < threshold)) break;
    Cluster& a = clusters[static_cast<std::size_t>(bi)];
    Cluster& b = clusters[static_cast<std::size_t>(bj)];
    a.members.insert(a.members.end(), b.members.begin(), b.members.end());
    a.sum += b.sum;
    a.centroid = normalized(a.sum / static_cast<double>(a.members.size()));
    b.alive = false;
    for (Index k = 0; k < static_cast<Index>(n); ++k) {
      if (k == bi || !clusters[static_cast<std::size_t>(k)].alive) continue;
      const double d = cosine_distance(a.centroid, clusters[static_cast<std::size_t>(k)].centroid);
      if (k < bi) dist(k, bi) = d;
      else dist(bi, k) = d;
    }
  }

  std::vector<std::size_t> alive;
  for (std::size_t i = 0; i < n; ++i) {
    if (clusters[i].alive) alive.push_back(i);
  }
  std::vector<std::size_t> large, small;
  for (std::size_t c : alive) {
    (static_cast<int>(clusters[c].members.size()) >= min_cluster_size ? large : small).push_back(c);
  }
  std::vector<int> raw(n, -1);
  if (large.empty()) {
    // No cluster is big enough: the largest one absorbs everything.
    std::size_t biggest = alive.front();
    for (std::size_t c : alive) {
      if (clusters[c].members.size() > clusters[biggest].members.size()) biggest = c;
    }
    std::fill(raw.begin(), raw.end(), static_cast<int>(biggest));
  } else {
    for (std::size_t c : large) {
      for (std::size_t m : clusters[c].members) raw[m] = static_cast<int>(c);
    }
    for (std::size_t c : small) {
      for (std::size_t m : clusters[c].members) {
        std::size_t nearest = large.front();
        double best = inf;
        for (std::size_t l : large) {
          const double d = cosine_distance(embeddings[m], clusters[l].centroid);
          if (d < best) {
            best = d;
            nearest = l;
          }
        }
        raw[m] = static_cast<int>(nearest);
      }
    }
  }
  // Renumber in order of first appearance.
  std::vector<int> remap(n, -1);
  int next = 0;
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = remap[static_cast<std::size_t>(raw[i])];
    if (r < 0) r = next++;
    ids[i] = r;
  }
  return ids;
}

ClusterMap complete_cluster_map(const FrameMatrix& features, std::span<const LocalWindowOutput> windows,
                                std::span<const Embedding> embeddings, std::span<const int> cluster_ids,
                                const Embedder& embedder) {
  if (embeddings.size() != cluster_ids.size()) throw ConfigError("complete_cluster_map: size mismatch");
  ClusterMap map(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) map[w].assign(static_cast<std::size_t>(windows[w].labels.cols()), -1);
  int num_clusters = 0;
  for (int c : cluster_ids) num_clusters = std::max(num_clusters, c + 1);
  std::vector<Vector> centroids(static_cast<std::size_t>(num_clusters));
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto& e = embeddings[i];
    map[static_cast<std::size_t>(e.window)][static_cast<std::size_t>(e.slot)] = cluster_ids[i];
    auto& c = centroids[static_cast<std::size_t>(cluster_ids[i])];
    if (c.size() == 0) c = Vector::Zero(e.vector.size());
    c += e.vector;
  }
  for (auto& c : centroids) c = normalized(c);

  for (std::size_t w = 0; w < windows.size(); ++w) {
    const Matrix& L = windows[w].labels;
    for (Index s = 0; s < L.cols(); ++s) {
      auto& slot = map[w][static_cast<std::size_t>(s)];
      if (slot >= 0) continue;
      std::vector<Index> frames;
      for (Index t = 0; t < L.rows(); ++t) {
        if (L(t, s) >= 0.5) frames.push_back(windows[w].first_frame + t);
      }
      if (frames.empty()) continue;
      if (centroids.empty()) {
        slot = 0;
        continue;
      }
      const Vector v = embedder.embed(features, frames);
      int nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centroids.size(); ++k) {
        const double d = cosine_distance(v, centroids[k]);
        if (d < best) {
          best = d;
          nearest = static_cast<int>(k);
        }
      }
      slot = nearest;
    }
  }
  return map;
}

Annotation align_and_aggregate(std::span<const LocalWindowOutput> windows, const ClusterMap& cluster_map,
                               Index num_frames, double frame_rate, const std::string& recording_id) {
  if (cluster_map.size() != windows.size()) throw ConfigError("align_and_aggregate: cluster map size mismatch");
  int speakers = 0;
  for (const auto& w : cluster_map) {
    for (int c : w) speakers = std::max(speakers, c + 1);
  }
  Matrix sum = Matrix::Zero(num_frames, speakers);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(num_frames);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    for (Index t = 0; t < win.activity.rows(); ++t) {
      const Index g = win.first_frame + t;
      if (g < 0 || g >= num_frames) continue;
      count[g] += 1.0;
      RowVector frame = RowVector::Zero(speakers);
      for (Index s = 0; s < win.activity.cols(); ++s) {
        const int k = cluster_map[w][static_cast<std::size_t>(s)];
        if (k >= 0) frame[k] = std::max(frame[k], win.activity(t, s));
      }
      sum.row(g) += frame;
    }
  }
  FrameMatrix binary;
  binary.frame_rate = frame_rate;
  binary.data = Matrix::Zero(num_frames, speakers);
  for (Index t = 0; t < num_frames; ++t) {
    if (count[t] == 0.0) continue;
    for (int k = 0; k < speakers; ++k) binary.data(t, k) = sum(t, k) / count[t] >= 0.5 ? 1.0 : 0.0;
  }
  std::vector<std::string> names;
  for (int k = 0; k < speakers; ++k) names.push_back(global_label(k));
  return frames_to_annotation(binary, names, recording_id);
}

SegmentedRecording segment_recording(const FrameMatrix& features, const SegmentationModel& model,
                                     const Embedder& embedder, const PipelineParams& params,
                                     const std::string& recording_id) {
  const double W = model.config().window;
  params.validate(W);
  SegmentedRecording rec;
  rec.recording_id = recording_id;
  rec.features = features;
  const auto spans = slide_windows(features.duration(), W, params.resolved_hop(W));
  rec.windows = segment_windows(features, model, spans);
  rec.embeddings = extract_embeddings(features, rec.windows, embedder, params.min_embed_duration);
  return rec;
}

Annotation cluster_recording(const SegmentedRecording& rec, const Embedder& embedder, const PipelineParams& params) {
  std::vector<int> ids;
  if (!rec.embeddings.empty()) {
    std::vector<Vector> vecs;
    for (const auto& e : rec.embeddings) vecs.push_back(e.vector);
    ids = ahc_cluster(vecs, params.clustering_threshold, params.min_cluster_size);
  }
  const ClusterMap map = complete_cluster_map(rec.features, rec.windows, rec.embeddings, ids, embedder);
  return align_and_aggregate(rec.windows, map, rec.features.num_frames(), rec.features.frame_rate, rec.recording_id);
}

Annotation run_pipeline(const FrameMatrix& features, const SegmentationModel& model, const Embedder& embedder,
                        const PipelineParams& params, const std::string& recording_id) {
  return cluster_recording(segment_recording(features, model, embedder, params, recording_id), embedder, params);
}

std::vector<int> oracle_assignment(const Matrix& local, const Matrix& ref) {
  if (local.rows() != ref.rows()) throw ConfigError("oracle_assignment: frame count mismatch");
  const Index n = std::max(local.cols(), ref.cols());
  Matrix cost = Matrix::Zero(n, n);
  for (Index s = 0; s < n; ++s) {
    for (Index r = 0; r < n; ++r) {
      double c = 0.0;
      for (Index t = 0; t < local.rows(); ++t) {
        const double h = s < local.cols() ? local(t, s) : 0.0;
        const double y = r < ref.cols() ? ref(t, r) : 0.0;
        c += std::abs(h - y);
      }
      cost(s, r) = c;
    }
  }
  std::vector<int> a = min_cost_assignment(cost);
  a.resize(static_cast<std::size_t>(local.cols()));
  return a;
}

Annotation oracle_stitch(std::span<const LocalWindowOutput> windows, const Annotation& reference_in,
                         double frame_rate, const std::string& recording_id) {
  const Annotation reference = reference_in.normalized();
  const auto ref_labels = reference.labels();
  const Index R = static_cast<Index>(ref_labels.size());
  Index total = 0;
  Index max_slots = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (w > 0 && windows[w].first_frame < windows[w - 1].first_frame + windows[w - 1].num_frames()) {
      throw ConfigError("oracle_stitch: windows overlap (hop must equal W)");
    }
    total = std::max(total, windows[w].first_frame + windows[w].num_frames());
    max_slots = std::max(max_slots, windows[w].labels.cols());
  }
  const Index width = R + max_slots;  // reference speakers, then unmatched slots
  FrameMatrix out;
  out.frame_rate = frame_rate;
  out.data = Matrix::Zero(total, width);
  for (const auto& win : windows) {
    const FrameMatrix ref = annotation_to_frames(reference, static_cast<double>(win.first_frame) / frame_rate,
                                                 win.num_frames(), frame_rate, ref_labels);
    const std::vector<int> assign = oracle_assignment(win.labels, ref.data);
    for (Index s = 0; s < win.labels.cols(); ++s) {
      const Index col = std::min<Index>(assign[static_cast<std::size_t>(s)], width - 1);
      for (Index t = 0; t < win.num_frames(); ++t) {
        if (win.labels(t, s) >= 0.5) out.data(win.first_frame + t, col) = 1.0;
      }
    }
  }
  std::vector<std::string> names = ref_labels;
  for (Index k = 0; k < max_slots; ++k) names.push_back("unmatched" + std::to_string(k));
  return frames_to_annotation(out, names, recording_id.empty() ? reference.recording_id : recording_id);
}

}  // namespace eendvc
