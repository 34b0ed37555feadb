#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eendvc/types.h"

namespace eendvc {

struct Segment {
  double start = 0.0;
  double end = 0.0;
  std::string label;

  double duration() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

struct TimeSpan {
  double start = 0.0;
  double end = 0.0;

  double duration() const { return end - start; }
  bool operator==(const TimeSpan&) const = default;
};

// "Who spoke when" for one recording.
struct Annotation {
  std::string recording_id;
  std::vector<Segment> segments;

  // Sorted, de-duplicated speaker labels.
  std::vector<std::string> labels() const;

  // Merges overlapping or touching same-speaker segments and sorts by
  // (start, label). Idempotent.
  Annotation normalized() const;

  // Latest segment end, 0 for an empty annotation.
  double extent() const;

  // Total speech of `label` (segments assumed normalized).
  double speaker_duration(std::string_view label) const;

  // Restricts to [span.start, span.end), clipping segments at the edges.
  Annotation cropped(TimeSpan span) const;
};

struct Uem {
  std::string recording_id;
  std::vector<TimeSpan> scored_regions;
};

std::vector<Annotation> read_rttm(std::string_view text);
std::string write_rttm(std::span<const Annotation> annotations);
std::string write_rttm(const Annotation& annotation);

std::vector<Uem> read_uem(std::string_view text);
std::string write_uem(std::span<const Uem> uems);

std::vector<Annotation> read_rttm_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

// Binary T' x speaker_order.size() matrix; entry (t, s) is 1 iff speaker s is
// active at the midpoint of frame t. Frame count = floor(duration * rate).
FrameMatrix annotation_to_frames(const Annotation& annotation, TimeSpan window, double frame_rate,
                                 std::span<const std::string> speaker_order);

// Same, with an explicit frame count (used when the grid comes from features).
FrameMatrix annotation_to_frames(const Annotation& annotation, double start_time,
                                 Index num_frames, double frame_rate,
                                 std::span<const std::string> speaker_order);

// Maximal runs of ones become segments. Column s is labeled speaker_names[s].
Annotation frames_to_annotation(const FrameMatrix& binary, std::span<const std::string> speaker_names,
                                std::string recording_id = {});

}  // namespace eendvc
