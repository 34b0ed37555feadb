#include "eendvc/annotation.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "eendvc/error.h"

namespace eendvc {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

double parse_double(std::string_view s, std::size_t line_no, const char* what) {
  // std::from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + std::string(s) + "'");
  }
  return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;
    fn(line, line_no);
  }
}

std::string format_ms(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  return buf;
}

}  // namespace

std::vector<std::string> Annotation::labels() const {
  std::vector<std::string> out;
  for (const auto& s : segments) out.push_back(s.label);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Annotation Annotation::normalized() const {
  std::vector<Segment> sorted = segments;
  std::sort(sorted.begin(), sorted.end(), [](const Segment& a, const Segment& b) {
    if (a.label != b.label) return a.label < b.label;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  Annotation out{recording_id, {}};
  for (const auto& s : sorted) {
    if (!(s.end > s.start)) continue;
    if (!out.segments.empty() && out.segments.back().label == s.label &&
        s.start <= out.segments.back().end) {
      out.segments.back().end = std::max(out.segments.back().end, s.end);
    } else {
      out.segments.push_back(s);
    }
  }
  std::sort(out.segments.begin(), out.segments.end(), [](const Segment& a, const Segment& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.label < b.label;
  });
  return out;
}

double Annotation::extent() const {
  double e = 0.0;
  for (const auto& s : segments) e = std::max(e, s.end);
  return e;
}

double Annotation::speaker_duration(std::string_view label) const {
  double total = 0.0;
  for (const auto& s : segments) {
    if (s.label == label) total += s.duration();
  }
  return total;
}

Annotation Annotation::cropped(TimeSpan span) const {
  Annotation out{recording_id, {}};
  for (const auto& s : segments) {
    const double a = std::max(s.start, span.start);
    const double b = std::min(s.end, span.end);
    if (b > a) out.segments.push_back({a, b, s.label});
  }
  return out;
}

std::vector<Annotation> read_rttm(std::string_view text) {
  std::vector<Annotation> out;
  std::map<std::string, std::size_t, std::less<>> index;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto f = split_ws(line);
    if (f.size() < 9) {
      throw ParseError("line " + std::to_string(line_no) + ": expected at least 9 fields, got " +
                       std::to_string(f.size()));
    }
    if (f[0] != "SPEAKER") {
      throw ParseError("line " + std::to_string(line_no) + ": unsupported type '" + std::string(f[0]) + "'");
    }
    const double onset = parse_double(f[3], line_no, "onset");
    const double dur = parse_double(f[4], line_no, "duration");
    if (dur < 0.0) throw ParseError("line " + std::to_string(line_no) + ": negative duration");
    if (onset < 0.0) throw ParseError("line " + std::to_string(line_no) + ": negative onset");
    const std::string rec(f[1]);
    auto it = index.find(rec);
    if (it == index.end()) {
      it = index.emplace(rec, out.size()).first;
      out.push_back(Annotation{rec, {}});
    }
    if (dur > 0.0) out[it->second].segments.push_back({onset, onset + dur, std::string(f[7])});
  });
  return out;
}

std::string write_rttm(const Annotation& annotation) {
  std::vector<Segment> segs = annotation.segments;
  std::stable_sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.label < b.label;
  });
  std::string out;
  for (const auto& s : segs) {
    out += "SPEAKER " + annotation.recording_id + " 1 " + format_ms(s.start) + " " +
           format_ms(s.end - s.start) + " <NA> <NA> " + s.label + " <NA> <NA>\n";
  }
  return out;
}

std::string write_rttm(std::span<const Annotation> annotations) {
  std::string out;
  for (const auto& a : annotations) out += write_rttm(a);
  return out;
}

std::vector<Uem> read_uem(std::string_view text) {
  std::vector<Uem> out;
  std::map<std::string, std::size_t, std::less<>> index;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto f = split_ws(line);
    if (f.size() < 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 UEM fields");
    }
    const double a = parse_double(f[2], line_no, "start");
    const double b = parse_double(f[3], line_no, "end");
    if (!(b > a) || a < 0.0) throw ParseError("line " + std::to_string(line_no) + ": empty or negative region");
    const std::string rec(f[0]);
    auto it = index.find(rec);
    if (it == index.end()) {
      it = index.emplace(rec, out.size()).first;
      out.push_back(Uem{rec, {}});
    }
    out[it->second].scored_regions.push_back({a, b});
  });
  for (auto& u : out) {
    auto& r = u.scored_regions;
    std::sort(r.begin(), r.end(), [](const TimeSpan& x, const TimeSpan& y) { return x.start < y.start; });
    std::vector<TimeSpan> merged;
    for (const auto& s : r) {
      if (!merged.empty() && s.start <= merged.back().end) {
        merged.back().end = std::max(merged.back().end, s.end);
      } else {
        merged.push_back(s);
      }
    }
    r = std::move(merged);
  }
  return out;
}

std::string write_uem(std::span<const Uem> uems) {
  std::string out;
  for (const auto& u : uems) {
    for (const auto& r : u.scored_regions) {
      out += u.recording_id + " 1 " + format_ms(r.start) + " " + format_ms(r.end) + "\n";
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
}

std::vector<Annotation> read_rttm_file(const std::string& path) {
  try {
    return read_rttm(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

FrameMatrix annotation_to_frames(const Annotation& annotation, double start_time, Index num_frames,
                                 double frame_rate, std::span<const std::string> speaker_order) {
  if (!(frame_rate > 0.0)) throw ConfigError("frame_rate must be positive");
  FrameMatrix fm;
  fm.frame_rate = frame_rate;
  fm.start_time = start_time;
  fm.data = Matrix::Zero(std::max<Index>(num_frames, 0), static_cast<Index>(speaker_order.size()));
  for (std::size_t s = 0; s < speaker_order.size(); ++s) {
    for (const auto& seg : annotation.segments) {
      if (seg.label != speaker_order[s]) continue;
      // Frames whose midpoint lies in [seg.start, seg.end).
      const double lo = (seg.start - start_time) * frame_rate - 0.5;
      const double hi = (seg.end - start_time) * frame_rate - 0.5;
      Index t0 = std::max<Index>(0, static_cast<Index>(std::ceil(lo)));
      Index t1 = std::min<Index>(fm.data.rows(), static_cast<Index>(std::ceil(hi)));
      // Guard against rounding at the boundaries with the exact midpoint test.
      while (t0 > 0 && fm.frame_mid(t0 - 1) >= seg.start) --t0;
      while (t0 < t1 && fm.frame_mid(t0) < seg.start) ++t0;
      while (t1 < fm.data.rows() && fm.frame_mid(t1) < seg.end) ++t1;
      while (t1 > t0 && fm.frame_mid(t1 - 1) >= seg.end) --t1;
      for (Index t = t0; t < t1; ++t) fm.data(t, static_cast<Index>(s)) = 1.0;
    }
  }
  return fm;
}

FrameMatrix annotation_to_frames(const Annotation& annotation, TimeSpan window, double frame_rate,
                                 std::span<const std::string> speaker_order) {
  if (!(frame_rate > 0.0)) throw ConfigError("frame_rate must be positive");
  const auto n = static_cast<Index>(std::floor(window.duration() * frame_rate + 1e-9));
  return annotation_to_frames(annotation, window.start, n, frame_rate, speaker_order);
}

Annotation frames_to_annotation(const FrameMatrix& binary, std::span<const std::string> speaker_names,
                                std::string recording_id) {
  if (static_cast<Index>(speaker_names.size()) != binary.data.cols()) {
    throw ConfigError("speaker_names size does not match matrix columns");
  }
  Annotation out{std::move(recording_id), {}};
  const Index T = binary.data.rows();
  for (Index s = 0; s < binary.data.cols(); ++s) {
    Index t = 0;
    while (t < T) {
      if (binary.data(t, s) < 0.5) {
        ++t;
        continue;
      }
      Index e = t;
      while (e < T && binary.data(e, s) >= 0.5) ++e;
      out.segments.push_back({binary.frame_start(t), binary.frame_start(e), speaker_names[s]});
      t = e;
    }
  }
  std::stable_sort(out.segments.begin(), out.segments.end(), [](const Segment& a, const Segment& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.label < b.label;
  });
  return out;
}

}  // namespace eendvc
