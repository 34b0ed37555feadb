#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eendvc/annotation.h"

namespace eendvc {

inline constexpr int kSampleRate = 16000;

// Parameters of one synthetic conversation.
struct SynthSpec {
  std::uint64_t seed = 0;
  int num_speakers = 3;
  double duration = 60.0;     // seconds
  double mean_turn = 2.0;     // mean speech-run length, seconds
  double mean_pause = 3.0;    // mean silence between a speaker's runs, seconds
  double overlap_prob = 0.2;  // fraction of contested starts allowed to overlap
  std::string recording_id = "synth";

  void validate() const;
};

struct Conversation {
  std::vector<float> audio;  // 16 kHz mono, roughly in [-1, 1]
  Annotation annotation;
};

// Speaker s is a harmonic tone at 120 * (s + 1) Hz plus noise band-passed
// around a speaker-specific centre frequency. Activity comes from per-speaker
// two-state (talk/pause) semi-Markov chains with shifted-exponential
// durations; a fraction overlap_prob of the starts that would overlap another
// active speaker is accepted (spread evenly by error diffusion), the others
// are deferred until the floor is free.
// Bit-identical for identical specs.
Conversation gen_conversation(const SynthSpec& spec);

// Overlapped-speech duration divided by total speech (union) duration.
double overlap_fraction(const Annotation& annotation);

// Base frequency of synthetic speaker s.
inline double speaker_base_frequency(int s) { return 120.0 * (s + 1); }

// 16-bit PCM mono WAV.
void write_wav(const std::string& path, const std::vector<float>& audio, int sample_rate = kSampleRate);
std::vector<float> read_wav(const std::string& path, int* sample_rate = nullptr);

}  // namespace eendvc
