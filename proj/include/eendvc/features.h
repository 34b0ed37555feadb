#pragma once

#include <span>
#include <string>

#include "eendvc/types.h"

namespace eendvc {

struct LogMelOptions {
  int sample_rate = 16000;
  int window = 400;  // 25 ms
  int hop = 320;     // 20 ms
  int fft_size = 512;
  int num_mels = 40;
  double floor = 1e-10;
};

// Log mel-filterbank energies. T' = floor((T - window) / hop) + 1, or an empty
// matrix when fewer than `window` samples are given. frame_rate = sr / hop.
FrameMatrix logmel(std::span<const float> audio, const LogMelOptions& options = {});

inline long logmel_num_frames(long num_samples, const LogMelOptions& o = {}) {
  return num_samples < o.window ? 0 : (num_samples - o.window) / o.hop + 1;
}

// FEAT file: "FEAT", u32 version (1), u32 T', u32 F, f32 frame_rate,
// f32 start_time, T' * F f32 row-major; all little-endian. Values are stored
// as f32, so the round trip is lossless for f32-representable data.
inline constexpr std::uint32_t kFeatVersion = 1;
void save_features(const std::string& path, const FrameMatrix& features);
FrameMatrix load_features(const std::string& path);

std::string encode_features(const FrameMatrix& features);
FrameMatrix decode_features(std::string_view bytes);

}  // namespace eendvc
