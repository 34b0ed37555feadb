#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eendvc/annotation.h"

namespace eendvc {

struct DerBreakdown {
  double missed = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double scored_speech = 0.0;
  double der = 0.0;

  double errors() const { return missed + false_alarm + confusion; }
};

// Reference-speaker -> hypothesis-speaker one-to-one mapping maximizing total
// co-occurrence inside `regions` (whole timeline when empty). Ties resolve to
// the lexicographically smallest assignment over sorted labels.
std::map<std::string, std::string> optimal_mapping(const Annotation& ref, const Annotation& hyp,
                                                   const std::vector<TimeSpan>& regions = {});

// Scored regions: the UEM (or [0, max extent of ref/hyp]) minus +-collar
// around every reference segment boundary.
std::vector<TimeSpan> scoring_regions(const Annotation& ref, const Annotation& hyp, double collar,
                                      const Uem* uem = nullptr);

// Continuous-time DER. Throws NumericalError when there is no scored speech.
DerBreakdown der(const Annotation& ref, const Annotation& hyp, double collar = 0.0, const Uem* uem = nullptr);

struct FileScore {
  std::string recording_id;
  DerBreakdown score;
};

struct CorpusScore {
  std::vector<FileScore> files;
  std::vector<std::string> excluded;  // filtered by duration
  double macro_der = 0.0;             // unweighted mean of per-file DER
  DerBreakdown total;                 // summed components (micro)
};

struct ScoringPair {
  Annotation reference;
  Annotation hypothesis;
  std::optional<Uem> uem;
  double duration = -1.0;  // recording length for the filter; < 0 -> reference extent
};

CorpusScore der_corpus(const std::vector<ScoringPair>& pairs, double collar = 0.0, double min_duration = 0.0);

// CSV: file,missed,false_alarm,confusion,scored_speech,der then a MACRO row.
std::string score_report_csv(const CorpusScore& score);

// Frame-level error counts of a hypothesis whose columns are already aligned
// with the reference columns (column j of hyp = speaker j of ref).
struct FrameErrors {
  double missed = 0.0, false_alarm = 0.0, confusion = 0.0, speech = 0.0;
  double der() const { return speech > 0 ? (missed + false_alarm + confusion) / speech : 0.0; }
  FrameErrors& operator+=(const FrameErrors& o);
};
FrameErrors frame_errors(const Matrix& hyp, const Matrix& ref);

}  // namespace eendvc
