#include "eendvc/features.h"

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "eendvc/bytes.h"
#include "eendvc/error.h"

namespace eendvc {
namespace {

// FFTW planning is not thread-safe; execution with the new-array API is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// num_mels x (fft_size / 2 + 1) triangular filters, HTK mel scale, 0..sr/2.
Matrix mel_filterbank(const LogMelOptions& o) {
  const int bins = o.fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(o.num_mels, bins);
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(o.sample_rate / 2.0);
  std::vector<double> centres(o.num_mels + 2);
  for (int m = 0; m < o.num_mels + 2; ++m) {
    centres[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (o.num_mels + 1));
  }
  for (int m = 0; m < o.num_mels; ++m) {
    const double l = centres[m], c = centres[m + 1], r = centres[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * o.sample_rate / o.fft_size;
      if (hz > l && hz <= c) fb(m, k) = (hz - l) / (c - l);
      else if (hz > c && hz < r) fb(m, k) = (r - hz) / (r - c);
    }
  }
  return fb;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  const fftw_complex* output() const { return out_; }
  void run() { fftw_execute(plan_); }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

FrameMatrix logmel(std::span<const float> audio, const LogMelOptions& o) {
  FrameMatrix out;
  out.frame_rate = static_cast<double>(o.sample_rate) / o.hop;
  out.start_time = 0.0;
  const long frames = logmel_num_frames(static_cast<long>(audio.size()), o);
  out.data = Matrix::Zero(frames, o.num_mels);
  if (frames == 0) return out;

  const Matrix fb = mel_filterbank(o);
  std::vector<double> window(o.window);
  for (int i = 0; i < o.window; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / o.window);
  }
  RealFft fft(o.fft_size);
  const int bins = o.fft_size / 2 + 1;
  Vector power(bins);
  const double log_floor = std::log(o.floor);
  for (long t = 0; t < frames; ++t) {
    double* in = fft.input();
    const long offset = t * o.hop;
    for (int i = 0; i < o.fft_size; ++i) {
      in[i] = i < o.window ? static_cast<double>(audio[offset + i]) * window[i] : 0.0;
    }
    fft.run();
    const fftw_complex* X = fft.output();
    for (int k = 0; k < bins; ++k) power[k] = X[k][0] * X[k][0] + X[k][1] * X[k][1];
    const Vector mel = fb * power;
    for (int m = 0; m < o.num_mels; ++m) {
      out.data(t, m) = mel[m] > o.floor ? std::log(mel[m]) : log_floor;
    }
  }
  return out;
}

std::string encode_features(const FrameMatrix& f) {
  std::string out = "FEAT";
  bytes::put_u32(out, kFeatVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(f.data.rows()));
  bytes::put_u32(out, static_cast<std::uint32_t>(f.data.cols()));
  bytes::put_f32(out, static_cast<float>(f.frame_rate));
  bytes::put_f32(out, static_cast<float>(f.start_time));
  out.reserve(out.size() + 4 * f.data.size());
  for (Index t = 0; t < f.data.rows(); ++t) {
    for (Index c = 0; c < f.data.cols(); ++c) bytes::put_f32(out, static_cast<float>(f.data(t, c)));
  }
  return out;
}

FrameMatrix decode_features(std::string_view data) {
  bytes::Reader r(data);
  if (data.size() < 4 || r.take(4, "magic") != "FEAT") throw FormatError("bad FEAT magic");
  const std::uint32_t version = r.u32();
  if (version != kFeatVersion) throw FormatError("unsupported FEAT version " + std::to_string(version));
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  FrameMatrix f;
  f.frame_rate = r.f32();
  f.start_time = r.f32();
  if (!(f.frame_rate > 0.0)) throw FormatError("FEAT frame_rate must be positive");
  const std::uint64_t payload = static_cast<std::uint64_t>(rows) * cols * 4;
  if (r.remaining() < payload) {
    throw FormatError("truncated FEAT payload: need " + std::to_string(payload) + " bytes, have " +
                      std::to_string(r.remaining()));
  }
  f.data.resize(rows, cols);
  for (std::uint32_t t = 0; t < rows; ++t) {
    for (std::uint32_t c = 0; c < cols; ++c) f.data(t, c) = r.f32();
  }
  return f;
}

void save_features(const std::string& path, const FrameMatrix& features) {
  const std::string bytes = encode_features(features);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FrameMatrix load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_features(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace eendvc
