#include "eendvc/synth.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

#include "eendvc/bytes.h"
#include "eendvc/error.h"

namespace eendvc {
namespace {

constexpr double kRamp = 0.01;           // seconds of fade at turn edges
constexpr int kMaxHarmonics = 12;
constexpr double kToneRms = 0.05;
constexpr double kNoiseRms = 0.02;
constexpr double kBackgroundRms = 0.001;

double draw_duration(std::mt19937_64& rng, double mean) {
  const double shift = std::min(0.25, mean / 2.0);
  std::exponential_distribution<double> exp(1.0 / (mean - shift));
  return shift + exp(rng);
}

struct Event {
  double time;
  int speaker;
  bool operator>(const Event& o) const {
    if (time != o.time) return time > o.time;
    return speaker > o.speaker;
  }
};

std::vector<Segment> simulate_turns(const SynthSpec& spec, std::mt19937_64& rng) {
  const int n = spec.num_speakers;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<bool> talking(n, false);
  std::vector<double> talk_end(n, 0.0);
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  for (int s = 0; s < n; ++s) {
    events.push({unit(rng) * spec.mean_pause, s});
  }
  std::vector<Segment> segments;
  // Contested starts are accepted by error diffusion rather than independent
  // coin flips: the long-run acceptance rate is overlap_prob, but the number
  // of overlaps per recording varies much less.
  double credit = unit(rng);
  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    if (ev.time >= spec.duration) continue;
    const int s = ev.speaker;
    if (talking[s]) {
      talking[s] = false;
      events.push({ev.time + draw_duration(rng, spec.mean_pause), s});
      continue;
    }
    double busy_until = -1.0;
    for (int o = 0; o < n; ++o) {
      if (o != s && talking[o] && talk_end[o] > ev.time) busy_until = std::max(busy_until, talk_end[o]);
    }
    bool defer = false;
    if (busy_until > ev.time) {
      credit += spec.overlap_prob;
      if (credit >= 1.0) {
        credit -= 1.0;
      } else {
        defer = true;
      }
    }
    if (defer) {
      // Wait for the floor, with a short random gap so that deferred speakers
      // do not collide in a fixed order.
      events.push({busy_until + 0.3 * unit(rng), s});
      continue;
    }
    const double end = std::min(spec.duration, ev.time + draw_duration(rng, spec.mean_turn));
    talking[s] = true;
    talk_end[s] = end;
    segments.push_back({ev.time, end, "spk" + std::to_string(s)});
    events.push({end, s});
  }
  return segments;
}

// RBJ band-pass biquad (constant 0 dB peak gain).
struct BandPass {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  BandPass(double centre, double q, double sr) {
    const double w0 = 2.0 * std::numbers::pi * centre / sr;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b1 = 0.0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w0) / a0;
    a2 = (1.0 - alpha) / a0;
  }

  double operator()(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void render_speaker(int s, const std::vector<Segment>& turns, std::mt19937_64& rng,
                    std::vector<double>& mix) {
  const double sr = kSampleRate;
  const double f0 = speaker_base_frequency(s);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  int harmonics = 0;
  double amp_norm = 0.0;
  std::vector<double> phases;
  for (int k = 1; k <= kMaxHarmonics && k * f0 < 0.45 * sr; ++k) {
    ++harmonics;
    amp_norm += 1.0 / (k * k);
    phases.push_back(phase_dist(rng));
  }
  // sum of (a_k^2 / 2) with a_k = g / k gives RMS g * sqrt(amp_norm / 2)
  const double gain = kToneRms / std::sqrt(amp_norm / 2.0);

  BandPass bp(700.0 + 900.0 * (s % 8), 3.0, sr);
  std::normal_distribution<double> white(0.0, 1.0);
  // Band-pass of unit white noise with Q=3 has RMS about sqrt(bw / (sr/2)).
  const double bw = (700.0 + 900.0 * (s % 8)) / 3.0;
  const double noise_gain = kNoiseRms / std::sqrt(bw / (sr / 2.0));

  const std::size_t total = mix.size();
  std::vector<double> envelope(total, 0.0);
  for (const auto& seg : turns) {
    const auto a = static_cast<std::size_t>(std::floor(seg.start * sr));
    const auto b = std::min(total, static_cast<std::size_t>(std::ceil(seg.end * sr)));
    for (std::size_t i = a; i < b; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double edge = std::min(t - seg.start, seg.end - t);
      envelope[i] = std::max(envelope[i], std::clamp(edge / kRamp, 0.0, 1.0));
    }
  }
  for (std::size_t i = 0; i < total; ++i) {
    const double noise = bp(white(rng));
    const double env = envelope[i];
    if (env <= 0.0) continue;
    const double t = static_cast<double>(i) / sr;
    double tone = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      tone += std::sin(2.0 * std::numbers::pi * k * f0 * t + phases[k - 1]) / k;
    }
    mix[i] += env * (gain * tone + noise_gain * noise);
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (num_speakers < 1) throw ConfigError("num_speakers must be >= 1");
  if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
  if (!(mean_turn > 0.0) || !(mean_pause > 0.0)) throw ConfigError("mean_turn and mean_pause must be > 0");
  if (!(overlap_prob >= 0.0 && overlap_prob <= 1.0)) throw ConfigError("overlap_prob must be in [0, 1]");
}

Conversation gen_conversation(const SynthSpec& spec) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);

  Conversation conv;
  conv.annotation.recording_id = spec.recording_id;
  conv.annotation.segments = simulate_turns(spec, rng);

  const auto total = static_cast<std::size_t>(std::llround(spec.duration * kSampleRate));
  std::vector<double> mix(total, 0.0);
  for (int s = 0; s < spec.num_speakers; ++s) {
    std::vector<Segment> turns;
    for (const auto& seg : conv.annotation.segments) {
      if (seg.label == "spk" + std::to_string(s)) turns.push_back(seg);
    }
    std::mt19937_64 voice_rng(rng());
    render_speaker(s, turns, voice_rng, mix);
  }
  std::normal_distribution<double> white(0.0, kBackgroundRms);
  std::mt19937_64 bg_rng(rng());
  conv.audio.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    conv.audio[i] = static_cast<float>(std::clamp(mix[i] + white(bg_rng), -1.0, 1.0));
  }
  conv.annotation = conv.annotation.normalized();
  return conv;
}

double overlap_fraction(const Annotation& annotation) {
  std::vector<std::pair<double, int>> edges;
  for (const auto& s : annotation.segments) {
    edges.emplace_back(s.start, +1);
    edges.emplace_back(s.end, -1);
  }
  std::sort(edges.begin(), edges.end());
  double speech = 0.0, overlap = 0.0;
  int active = 0;
  double prev = 0.0;
  for (const auto& [t, d] : edges) {
    if (active >= 1) speech += t - prev;
    if (active >= 2) overlap += t - prev;
    active += d;
    prev = t;
  }
  return speech > 0.0 ? overlap / speech : 0.0;
}

void write_wav(const std::string& path, const std::vector<float>& audio, int sample_rate) {
  std::string out = "RIFF";
  const auto data_bytes = static_cast<std::uint32_t>(audio.size() * 2);
  bytes::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  bytes::put_u32(out, 16);
  out.push_back(1);  // PCM
  out.push_back(0);
  out.push_back(1);  // mono
  out.push_back(0);
  bytes::put_u32(out, static_cast<std::uint32_t>(sample_rate));
  bytes::put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  out.push_back(2);  // block align
  out.push_back(0);
  out.push_back(16);  // bits per sample
  out.push_back(0);
  out += "data";
  bytes::put_u32(out, data_bytes);
  for (float x : audio) {
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(x, -1.0f, 1.0f) * 32767.0f));
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((static_cast<std::uint16_t>(v) >> 8) & 0xFF));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<float> read_wav(const std::string& path, int* sample_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  bytes::Reader r(data);
  if (r.take(4, "RIFF") != "RIFF") throw FormatError(path + ": not a RIFF file");
  r.u32();
  if (r.take(4, "WAVE") != "WAVE") throw FormatError(path + ": not a WAVE file");
  int rate = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::string id(r.take(4, "chunk id"));
    const std::uint32_t size = r.u32();
    const std::string_view body = r.take(size + (size & 1u), "chunk body");
    if (id == "fmt ") {
      bytes::Reader fr(body);
      const std::uint32_t fmt_channels = fr.u32();
      const int format = static_cast<int>(fmt_channels & 0xFFFF);
      const int channels = static_cast<int>(fmt_channels >> 16);
      rate = static_cast<int>(fr.u32());
      fr.u32();
      const int bits = static_cast<int>(fr.u32() >> 16);
      if (format != 1 || channels != 1 || bits != 16) {
        throw FormatError(path + ": only 16-bit PCM mono WAV is supported");
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(path + ": data chunk before fmt chunk");
      std::vector<float> audio(size / 2);
      for (std::size_t i = 0; i < audio.size(); ++i) {
        const auto lo = static_cast<unsigned char>(body[2 * i]);
        const auto hi = static_cast<unsigned char>(body[2 * i + 1]);
        const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        audio[i] = static_cast<float>(v) / 32767.0f;
      }
      if (sample_rate) *sample_rate = rate;
      return audio;
    }
  }
  throw FormatError(path + ": no data chunk");
}

}  // namespace eendvc
