#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "eendvc/bytes.h"
#include "eendvc/error.h"
#include "eendvc/features.h"
#include "eendvc/synth.h"
#include "oracles.h"

namespace eendvc {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "eendvc_synth_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(Synth, SameSpecIsBitIdentical) {
  SynthSpec spec;
  spec.seed = 42;
  spec.duration = 20.0;
  const Conversation a = gen_conversation(spec);
  const Conversation b = gen_conversation(spec);
  EXPECT_EQ(a.audio, b.audio);
  EXPECT_EQ(a.annotation.segments, b.annotation.segments);
  spec.seed = 43;
  EXPECT_NE(gen_conversation(spec).audio, a.audio);
}

TEST(Synth, SingleSpeakerNeverOverlaps) {
  SynthSpec spec;
  spec.num_speakers = 1;
  spec.overlap_prob = 0.0;
  spec.duration = 60.0;
  const Conversation c = gen_conversation(spec);
  ASSERT_GE(c.annotation.segments.size(), 2u);
  EXPECT_EQ(overlap_fraction(c.annotation), 0.0);
  for (std::size_t i = 1; i < c.annotation.segments.size(); ++i) {
    EXPECT_GT(c.annotation.segments[i].start, c.annotation.segments[i - 1].end);
  }
}

TEST(Synth, NoSpeakersIsAnError) {
  SynthSpec spec;
  spec.num_speakers = 0;
  EXPECT_THROW(gen_conversation(spec), ConfigError);
}

TEST(Synth, OverlapFractionInExpectedRangeOverTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.num_speakers = 3;
    spec.duration = 60.0;
    spec.overlap_prob = 0.2;
    const double f = overlap_fraction(gen_conversation(spec).annotation);
    EXPECT_GE(f, 0.05) << "seed " << seed;
    EXPECT_LE(f, 0.4) << "seed " << seed;
  }
}

TEST(Synth, EverySpeakerAppearsInLongRecordings) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.num_speakers = 4;
    spec.duration = 10.0 * spec.mean_turn;
    EXPECT_EQ(gen_conversation(spec).annotation.labels().size(), 4u) << "seed " << seed;
  }
}

TEST(Synth, AnnotationStaysInsideTheRecording) {
  SynthSpec spec;
  spec.seed = 9;
  spec.duration = 30.0;
  const Conversation c = gen_conversation(spec);
  EXPECT_EQ(c.audio.size(), static_cast<std::size_t>(30 * kSampleRate));
  for (const auto& s : c.annotation.segments) {
    EXPECT_GE(s.start, 0.0);
    EXPECT_LE(s.end, 30.0);
    EXPECT_GT(s.end, s.start);
  }
}

TEST(Wav, RoundTripWithin16BitQuantization) {
  std::vector<float> audio(1000);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = static_cast<float>(0.5 * std::sin(0.01 * i));
  const auto path = temp_path("tone.wav").string();
  write_wav(path, audio);
  int rate = 0;
  const auto back = read_wav(path, &rate);
  EXPECT_EQ(rate, kSampleRate);
  ASSERT_EQ(back.size(), audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) EXPECT_NEAR(back[i], audio[i], 1.0 / 32767.0);
}

TEST(Logmel, TenSecondsGive499Frames) {
  const std::vector<float> audio(10 * kSampleRate, 0.0f);
  const FrameMatrix f = logmel(audio);
  EXPECT_EQ(f.num_frames(), 499);
  EXPECT_EQ(f.dim(), 40);
  EXPECT_DOUBLE_EQ(f.frame_rate, 50.0);
  EXPECT_EQ(logmel_num_frames(10 * kSampleRate), 499);
}

TEST(Logmel, SilenceSitsAtTheLogFloor) {
  const FrameMatrix f = logmel(std::vector<float>(4000, 0.0f));
  for (Index i = 0; i < f.data.size(); ++i) EXPECT_DOUBLE_EQ(f.data.data()[i], std::log(1e-10));
}

TEST(Logmel, ShortInputGivesEmptyMatrix) {
  EXPECT_EQ(logmel(std::vector<float>(399, 0.1f)).num_frames(), 0);
}

TEST(Logmel, DeterministicAndFinite) {
  SynthSpec spec;
  spec.duration = 5.0;
  const Conversation c = gen_conversation(spec);
  const FrameMatrix a = logmel(c.audio), b = logmel(c.audio);
  EXPECT_EQ(a.data, b.data);
  EXPECT_TRUE(a.data.allFinite());
}

TEST(Logmel, ToneEnergyPeaksInItsMelBand) {
  // A 1 kHz tone against a 250 Hz tone: the louder mel band must move up.
  auto peak_band = [](double freq) {
    std::vector<float> audio(kSampleRate);
    for (std::size_t i = 0; i < audio.size(); ++i) {
      audio[i] = static_cast<float>(0.5 * std::sin(2.0 * M_PI * freq * i / kSampleRate));
    }
    const FrameMatrix f = logmel(audio);
    Index best = 0;
    f.data.row(10).maxCoeff(&best);
    return best;
  };
  EXPECT_GT(peak_band(1000.0), peak_band(250.0));
}

TEST(FeatFile, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(1);
  FrameMatrix f{testing::random_matrix(rng, 100, 40, -20.0, 5.0).cast<float>().cast<double>(), 50.0, 1.5};
  const auto path = temp_path("x.feat").string();
  save_features(path, f);
  const FrameMatrix back = load_features(path);
  EXPECT_EQ(back.data, f.data);
  EXPECT_DOUBLE_EQ(back.frame_rate, 50.0);
  EXPECT_DOUBLE_EQ(back.start_time, 1.5);
}

TEST(FeatFile, BadMagicIsAFormatError) {
  FrameMatrix f{Matrix::Zero(2, 3), 50.0, 0.0};
  std::string bytes = encode_features(f);
  bytes.replace(0, 4, "XXXX");
  EXPECT_THROW(decode_features(bytes), FormatError);
}

TEST(FeatFile, PayloadShorterThanHeaderClaimsIsAFormatError) {
  std::string data = "FEAT";
  bytes::put_u32(data, 1);
  bytes::put_u32(data, 10);  // T'
  bytes::put_u32(data, 4);   // F
  bytes::put_f32(data, 50.0f);
  bytes::put_f32(data, 0.0f);
  for (int i = 0; i < 39; ++i) bytes::put_f32(data, 1.0f);  // one value short
  EXPECT_THROW(decode_features(data), FormatError);
}

}  // namespace
}  // namespace eendvc
