#include "eendvc/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "eendvc/assignment.h"
#include "eendvc/error.h"

namespace eendvc {
namespace {

using SpeakerSegments = std::vector<std::vector<TimeSpan>>;

// Per-speaker sorted, merged segment lists in the order of `labels`.
SpeakerSegments by_speaker(const Annotation& a, const std::vector<std::string>& labels) {
  SpeakerSegments out(labels.size());
  for (const auto& s : a.segments) {
    const auto it = std::lower_bound(labels.begin(), labels.end(), s.label);
    out[static_cast<std::size_t>(it - labels.begin())].push_back({s.start, s.end});
  }
  return out;
}

double intersection(const std::vector<TimeSpan>& a, const std::vector<TimeSpan>& b) {
  double total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].start, b[j].start), hi = std::min(a[i].end, b[j].end);
    if (hi > lo) total += hi - lo;
    if (a[i].end < b[j].end) ++i;
    else ++j;
  }
  return total;
}

std::vector<TimeSpan> intersect(const std::vector<TimeSpan>& a, const std::vector<TimeSpan>& b) {
  std::vector<TimeSpan> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].start, b[j].start), hi = std::min(a[i].end, b[j].end);
    if (hi > lo) out.push_back({lo, hi});
    if (a[i].end < b[j].end) ++i;
    else ++j;
  }
  return out;
}

bool active_at(const std::vector<TimeSpan>& segs, double t) {
  auto it = std::upper_bound(segs.begin(), segs.end(), t, [](double v, const TimeSpan& s) { return v < s.start; });
  if (it == segs.begin()) return false;
  --it;
  return t >= it->start && t < it->end;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::map<std::string, std::string> optimal_mapping(const Annotation& ref_in, const Annotation& hyp_in,
                                                   const std::vector<TimeSpan>& regions) {
  const Annotation ref = ref_in.normalized(), hyp = hyp_in.normalized();
  const auto rl = ref.labels(), hl = hyp.labels();
  auto rs = by_speaker(ref, rl), hs = by_speaker(hyp, hl);
  if (!regions.empty()) {
    for (auto& s : rs) s = intersect(s, regions);
    for (auto& s : hs) s = intersect(s, regions);
  }
  std::map<std::string, std::string> mapping;
  if (rl.empty() || hl.empty()) return mapping;
  Matrix overlap(static_cast<Index>(rl.size()), static_cast<Index>(hl.size()));
  for (std::size_t r = 0; r < rl.size(); ++r) {
    for (std::size_t h = 0; h < hl.size(); ++h) {
      overlap(static_cast<Index>(r), static_cast<Index>(h)) = intersection(rs[r], hs[h]);
    }
  }
  const std::vector<int> assign = min_cost_assignment(pad_square(-overlap, 0.0));
  for (std::size_t r = 0; r < rl.size(); ++r) {
    const int h = assign[r];
    if (h < static_cast<int>(hl.size())) mapping[rl[r]] = hl[static_cast<std::size_t>(h)];
  }
  return mapping;
}

std::vector<TimeSpan> scoring_regions(const Annotation& ref, const Annotation& hyp, double collar, const Uem* uem) {
  if (collar < 0.0) throw ConfigError("collar must be >= 0");
  std::vector<TimeSpan> base;
  if (uem) {
    base = uem->scored_regions;
  } else {
    const double end = std::max(ref.extent(), hyp.extent());
    if (end > 0.0) base.push_back({0.0, end});
  }
  if (collar == 0.0) return base;
  std::vector<TimeSpan> holes;
  for (const auto& s : ref.segments) {
    holes.push_back({s.start - collar, s.start + collar});
    holes.push_back({s.end - collar, s.end + collar});
  }
  std::sort(holes.begin(), holes.end(), [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
  std::vector<TimeSpan> merged;
  for (const auto& h : holes) {
    if (!merged.empty() && h.start <= merged.back().end) merged.back().end = std::max(merged.back().end, h.end);
    else merged.push_back(h);
  }
  std::vector<TimeSpan> out;
  for (const auto& r : base) {
    double cur = r.start;
    for (const auto& h : merged) {
      if (h.end <= cur || h.start >= r.end) continue;
      if (h.start > cur) out.push_back({cur, h.start});
      cur = std::max(cur, h.end);
      if (cur >= r.end) break;
    }
    if (cur < r.end) out.push_back({cur, r.end});
  }
  return out;
}

DerBreakdown der(const Annotation& ref_in, const Annotation& hyp_in, double collar, const Uem* uem) {
  const Annotation ref = ref_in.normalized(), hyp = hyp_in.normalized();
  const auto regions = scoring_regions(ref, hyp, collar, uem);
  const auto mapping = optimal_mapping(ref, hyp, regions);
  const auto rl = ref.labels(), hl = hyp.labels();
  const auto rs = by_speaker(ref, rl), hs = by_speaker(hyp, hl);
  std::vector<int> mapped(rl.size(), -1);
  for (std::size_t r = 0; r < rl.size(); ++r) {
    auto it = mapping.find(rl[r]);
    if (it != mapping.end()) {
      mapped[r] = static_cast<int>(std::lower_bound(hl.begin(), hl.end(), it->second) - hl.begin());
    }
  }

  DerBreakdown out;
  for (const auto& region : regions) {
    std::vector<double> cuts{region.start, region.end};
    for (const auto& s : ref.segments) {
      if (s.start > region.start && s.start < region.end) cuts.push_back(s.start);
      if (s.end > region.start && s.end < region.end) cuts.push_back(s.end);
    }
    for (const auto& s : hyp.segments) {
      if (s.start > region.start && s.start < region.end) cuts.push_back(s.start);
      if (s.end > region.start && s.end < region.end) cuts.push_back(s.end);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double dur = cuts[i + 1] - cuts[i];
      if (dur <= 0.0) continue;
      const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
      int n_ref = 0, n_hyp = 0, n_correct = 0;
      std::vector<char> hyp_active(hl.size(), 0);
      for (std::size_t h = 0; h < hl.size(); ++h) {
        hyp_active[h] = active_at(hs[h], mid);
        n_hyp += hyp_active[h];
      }
      for (std::size_t r = 0; r < rl.size(); ++r) {
        if (!active_at(rs[r], mid)) continue;
        ++n_ref;
        if (mapped[r] >= 0 && hyp_active[static_cast<std::size_t>(mapped[r])]) ++n_correct;
      }
      out.scored_speech += dur * n_ref;
      out.missed += dur * std::max(0, n_ref - n_hyp);
      out.false_alarm += dur * std::max(0, n_hyp - n_ref);
      out.confusion += dur * (std::min(n_ref, n_hyp) - n_correct);
    }
  }
  if (!(out.scored_speech > 0.0)) {
    throw NumericalError("DER undefined for '" + ref.recording_id + "': no scored reference speech");
  }
  out.der = out.errors() / out.scored_speech;
  return out;
}

CorpusScore der_corpus(const std::vector<ScoringPair>& pairs, double collar, double min_duration) {
  CorpusScore out;
  double sum = 0.0;
  for (const auto& p : pairs) {
    double duration = p.duration;
    if (duration < 0.0) {
      duration = p.reference.extent();
      if (p.uem && !p.uem->scored_regions.empty()) duration = p.uem->scored_regions.back().end;
    }
    if (min_duration > 0.0 && duration < min_duration) {
      out.excluded.push_back(p.reference.recording_id);
      continue;
    }
    FileScore fs{p.reference.recording_id, der(p.reference, p.hypothesis, collar, p.uem ? &*p.uem : nullptr)};
    sum += fs.score.der;
    out.total.missed += fs.score.missed;
    out.total.false_alarm += fs.score.false_alarm;
    out.total.confusion += fs.score.confusion;
    out.total.scored_speech += fs.score.scored_speech;
    out.files.push_back(std::move(fs));
  }
  if (!out.files.empty()) {
    out.macro_der = sum / static_cast<double>(out.files.size());
    out.total.der = out.total.errors() / out.total.scored_speech;
  }
  return out;
}

std::string score_report_csv(const CorpusScore& score) {
  std::string out = "file,missed,false_alarm,confusion,scored_speech,der\n";
  for (const auto& f : score.files) {
    out += f.recording_id + "," + fmt(f.score.missed) + "," + fmt(f.score.false_alarm) + "," +
           fmt(f.score.confusion) + "," + fmt(f.score.scored_speech) + "," + fmt(f.score.der) + "\n";
  }
  out += "MACRO," + fmt(score.total.missed) + "," + fmt(score.total.false_alarm) + "," +
         fmt(score.total.confusion) + "," + fmt(score.total.scored_speech) + "," + fmt(score.macro_der) + "\n";
  return out;
}

FrameErrors& FrameErrors::operator+=(const FrameErrors& o) {
  missed += o.missed;
  false_alarm += o.false_alarm;
  confusion += o.confusion;
  speech += o.speech;
  return *this;
}

FrameErrors frame_errors(const Matrix& hyp, const Matrix& ref) {
  if (hyp.rows() != ref.rows()) throw ConfigError("frame_errors: frame count mismatch");
  FrameErrors e;
  const Index common = std::min(hyp.cols(), ref.cols());
  for (Index t = 0; t < ref.rows(); ++t) {
    int nr = 0, nh = 0, nc = 0;
    for (Index c = 0; c < ref.cols(); ++c) nr += ref(t, c) >= 0.5;
    for (Index c = 0; c < hyp.cols(); ++c) nh += hyp(t, c) >= 0.5;
    for (Index c = 0; c < common; ++c) nc += (ref(t, c) >= 0.5 && hyp(t, c) >= 0.5);
    e.speech += nr;
    e.missed += std::max(0, nr - nh);
    e.false_alarm += std::max(0, nh - nr);
    e.confusion += std::min(nr, nh) - nc;
  }
  return e;
}

}  // namespace eendvc
