#include <algorithm>
#include <cmath>

#include "eendvc/error.h"
#include "eendvc/labels.h"

namespace eendvc {
namespace {

// Peak number of simultaneously active speakers inside `span`.
int peak_overlap(const Annotation& a, TimeSpan span) {
  std::vector<std::pair<double, int>> edges;
  for (const auto& s : a.segments) {
    const double lo = std::max(s.start, span.start), hi = std::min(s.end, span.end);
    if (hi <= lo) continue;
    edges.emplace_back(lo, +1);
    edges.emplace_back(hi, -1);
  }
  // Ends sort before starts at equal times: touching segments do not overlap.
  std::sort(edges.begin(), edges.end());
  int active = 0, peak = 0;
  for (const auto& e : edges) {
    active += e.second;
    peak = std::max(peak, active);
  }
  return peak;
}

int smallest_covering(const std::vector<int>& values, double target, std::vector<double>& curve) {
  const int max_v = values.empty() ? 0 : *std::max_element(values.begin(), values.end());
  curve.assign(static_cast<std::size_t>(max_v) + 1, 0.0);
  for (int v : values) curve[static_cast<std::size_t>(v)] += 1.0;
  double acc = 0.0;
  for (auto& c : curve) {
    acc += c;
    c = acc / static_cast<double>(values.size());
  }
  for (int n = 0; n <= max_v; ++n) {
    if (curve[static_cast<std::size_t>(n)] >= target - 1e-12) return n;
  }
  return max_v;
}

}  // namespace

CapacityStats speaker_capacity_stats(std::span<const Annotation> annotations, double window,
                                     double coverage_target) {
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) throw ConfigError("coverage_target must be in (0, 1]");
  if (!(window > 0.0)) throw ConfigError("window must be positive");
  std::vector<int> speakers, overlaps;
  for (const auto& raw : annotations) {
    const Annotation a = raw.normalized();
    const double extent = a.extent();
    for (long i = 0; static_cast<double>(i) * window < extent; ++i) {
      const double start = static_cast<double>(i) * window;
      const TimeSpan span{start, std::min(start + window, extent)};
      const Annotation crop = a.cropped(span);
      speakers.push_back(static_cast<int>(crop.labels().size()));
      overlaps.push_back(peak_overlap(crop, span));
    }
  }
  if (speakers.empty()) throw ConfigError("speaker_capacity_stats: empty dataset");
  CapacityStats st;
  st.num_windows = speakers.size();
  st.num_speakers = std::max(1, smallest_covering(speakers, coverage_target, st.coverage_n));
  st.max_simultaneous = std::clamp(smallest_covering(overlaps, coverage_target, st.coverage_k), 1, st.num_speakers);
  return st;
}

}  // namespace eendvc
