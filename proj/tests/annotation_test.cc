#include "eendvc/annotation.h"

#include <gtest/gtest.h>

#include <random>

#include "eendvc/assignment.h"
#include "eendvc/error.h"
#include "oracles.h"

namespace eendvc {
namespace {

TEST(Rttm, ParsesOneLine) {
  const auto anns = read_rttm("SPEAKER rec1 1 0.50 1.25 <NA> <NA> spk0 <NA> <NA>\n");
  ASSERT_EQ(anns.size(), 1u);
  EXPECT_EQ(anns[0].recording_id, "rec1");
  ASSERT_EQ(anns[0].segments.size(), 1u);
  EXPECT_EQ(anns[0].segments[0], (Segment{0.50, 1.75, "spk0"}));
}

TEST(Rttm, EmptyTextGivesNoAnnotations) { EXPECT_TRUE(read_rttm("").empty()); }

TEST(Rttm, NegativeDurationIsRejected) {
  EXPECT_THROW(read_rttm("SPEAKER rec1 1 0.50 -1.0 <NA> <NA> spk0 <NA> <NA>\n"), ParseError);
}

TEST(Rttm, MalformedLineNamesLineNumber) {
  try {
    read_rttm("SPEAKER rec1 1 0.5 1.0 <NA> <NA> a <NA> <NA>\nSPEAKER rec1 1 zero\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Rttm, WritesMillisecondPrecision) {
  Annotation a{"rec1", {{0.5, 1.75, "spk0"}}};
  EXPECT_EQ(write_rttm(a), "SPEAKER rec1 1 0.500 1.250 <NA> <NA> spk0 <NA> <NA>\n");
  EXPECT_EQ(write_rttm(Annotation{"rec1", {}}), "");
}

TEST(Rttm, RoundTripIsLosslessToOneMillisecond) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> start(0.0, 100.0), dur(0.001, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    Annotation a{"r" + std::to_string(trial), {}};
    for (int i = 0; i < 3; ++i) {
      const double s = start(rng);
      a.segments.push_back({s, s + dur(rng), "spk" + std::to_string(i)});
    }
    a = a.normalized();
    const auto back = read_rttm(write_rttm(a));
    ASSERT_EQ(back.size(), 1u);
    ASSERT_EQ(back[0].segments.size(), a.segments.size());
    for (std::size_t i = 0; i < a.segments.size(); ++i) {
      EXPECT_NEAR(back[0].segments[i].start, a.segments[i].start, 5e-4 + 1e-9);
      EXPECT_NEAR(back[0].segments[i].end, a.segments[i].end, 1e-3 + 1e-9);
      EXPECT_EQ(back[0].segments[i].label, a.segments[i].label);
    }
  }
}

TEST(Uem, RoundTrip) {
  std::vector<Uem> uems{{"rec1", {{0.0, 10.0}, {12.5, 20.0}}}, {"rec2", {{1.0, 2.0}}}};
  const auto back = read_uem(write_uem(uems));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].scored_regions, uems[0].scored_regions);
  EXPECT_EQ(back[1].recording_id, "rec2");
}

TEST(Annotation, NormalizationMergesAndIsIdempotent) {
  Annotation a{"r", {{2.0, 3.0, "b"}, {0.0, 1.0, "a"}, {0.5, 1.5, "a"}, {1.5, 2.0, "a"}}};
  const Annotation n = a.normalized();
  ASSERT_EQ(n.segments.size(), 2u);
  EXPECT_EQ(n.segments[0], (Segment{0.0, 2.0, "a"}));
  EXPECT_EQ(n.segments[1], (Segment{2.0, 3.0, "b"}));
  EXPECT_EQ(n.normalized().segments, n.segments);
}

TEST(Frames, SingleSpeakerAtTenFramesPerSecond) {
  Annotation a{"r", {{0.0, 1.0, "A"}}};
  const std::vector<std::string> order{"A"};
  const FrameMatrix m = annotation_to_frames(a, TimeSpan{0.0, 2.0}, 10.0, order);
  ASSERT_EQ(m.num_frames(), 20);
  for (Index t = 0; t < 20; ++t) EXPECT_EQ(m.data(t, 0), t < 10 ? 1.0 : 0.0) << t;
}

TEST(Frames, EmptyAnnotationIsAllZero) {
  const std::vector<std::string> order{"A", "B"};
  const FrameMatrix m = annotation_to_frames(Annotation{}, TimeSpan{0.0, 1.0}, 10.0, order);
  EXPECT_EQ(m.data.rows(), 10);
  EXPECT_EQ(m.data.sum(), 0.0);
}

TEST(Frames, OverlapUsesFrameMidpoints) {
  Annotation a{"r", {{0.5, 1.0, "A"}, {0.5, 1.0, "B"}}};
  const std::vector<std::string> order{"A", "B"};
  const FrameMatrix m = annotation_to_frames(a, TimeSpan{0.0, 1.5}, 10.0, order);
  for (Index t = 0; t < 15; ++t) {
    // Midpoint (t + 0.5) / 10 lies in [0.5, 1.0) for t = 5..9.
    const double expect = (t >= 5 && t <= 9) ? 1.0 : 0.0;
    EXPECT_EQ(m.data(t, 0), expect);
    EXPECT_EQ(m.data(t, 1), expect);
  }
}

TEST(Frames, RunsBecomeSegments) {
  FrameMatrix m{Matrix(4, 1), 10.0, 0.0};
  m.data << 1, 1, 0, 1;
  const std::vector<std::string> names{"A"};
  const Annotation a = frames_to_annotation(m, names);
  ASSERT_EQ(a.segments.size(), 2u);
  EXPECT_NEAR(a.segments[0].start, 0.0, 1e-12);
  EXPECT_NEAR(a.segments[0].end, 0.2, 1e-12);
  EXPECT_NEAR(a.segments[1].start, 0.3, 1e-12);
  EXPECT_NEAR(a.segments[1].end, 0.4, 1e-12);
  m.data.setZero();
  EXPECT_TRUE(frames_to_annotation(m, names).segments.empty());
}

TEST(Frames, RoundTripOnRandomMatrices) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> names{"a", "b", "c"};
  for (int trial = 0; trial < 50; ++trial) {
    const double rate = trial % 2 ? 50.0 : 12.5;
    const double start = 0.37 * trial;
    FrameMatrix m{testing::random_binary(rng, 40 + trial, 3), rate, start};
    const Annotation a = frames_to_annotation(m, names);
    const FrameMatrix back = annotation_to_frames(a, start, m.num_frames(), rate, names);
    EXPECT_EQ(back.data, m.data) << "trial " << trial;
  }
}

TEST(Assignment, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + trial % 7;
    const Matrix cost = testing::random_matrix(rng, n, n, 0.0, 10.0);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double c = 0.0;
      for (Index r = 0; r < n; ++r) c += cost(r, perm[static_cast<std::size_t>(r)]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    auto total = [&](const std::vector<int>& a) {
      double c = 0.0;
      for (Index r = 0; r < n; ++r) c += cost(r, a[static_cast<std::size_t>(r)]);
      return c;
    };
    EXPECT_NEAR(total(hungarian(cost)), best, 1e-9);
    EXPECT_NEAR(total(min_cost_assignment(cost)), best, 1e-9);
  }
}

TEST(Assignment, TiesResolveToLexicographicallySmallest) {
  const Matrix cost = Matrix::Zero(3, 3);
  EXPECT_EQ(min_cost_assignment(cost), (std::vector<int>{0, 1, 2}));
}

TEST(Assignment, HungarianHandlesLargeInstances) {
  std::mt19937_64 rng(8);
  const Matrix cost = testing::random_matrix(rng, 12, 12, 0.0, 1.0);
  const auto a = hungarian(cost);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 12; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
  // A 2-opt swap never improves an optimal assignment.
  auto total = [&](const std::vector<int>& p) {
    double c = 0.0;
    for (Index r = 0; r < 12; ++r) c += cost(r, p[static_cast<std::size_t>(r)]);
    return c;
  };
  const double base = total(a);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = i + 1; j < 12; ++j) {
      auto b = a;
      std::swap(b[i], b[j]);
      EXPECT_GE(total(b), base - 1e-12);
    }
  }
}

}  // namespace
}  // namespace eendvc
