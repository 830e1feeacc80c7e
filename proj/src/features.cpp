// SPDX-License-Identifier: Apache-2.0

#include "epr/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

namespace epr {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex g_fftw_plan_mutex;

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Power spectrum |X_k|^2 for k = 0..n/2.
  void power(std::vector<double>& dst) {
    fftw_execute(plan_);
    dst.resize(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) dst[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

void AudioClip::validate() const {
  if (samples.empty()) throw DataError("utterance too short: clip '" + utterance_id + "' is empty");
  if (sample_rate <= 0) throw DataError("invalid sample rate for clip '" + utterance_id + "'");
  for (double s : samples)
    if (!std::isfinite(s)) throw DataError("non-finite sample in clip '" + utterance_id + "'");
}

void FrameSpec::validate(int sample_rate) const {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  if (win_ms <= 0 || hop_ms <= 0) throw ConfigError("window and hop must be positive");
  if (hop_ms > win_ms) throw ConfigError("hop_ms must not exceed win_ms");
  if (n_mels < 2) throw ConfigError("n_mels must be at least 2");
  if (fft_len < win_samples(sample_rate))
    throw ConfigError("fft_len " + std::to_string(fft_len) + " shorter than window of " +
                      std::to_string(win_samples(sample_rate)) + " samples");
  if (hop_samples(sample_rate) < 1) throw ConfigError("hop shorter than one sample");
}

int SegmentSpec::hop_frames(const FrameSpec& frames) const { return seg_hop_ms / frames.hop_ms; }

void SegmentSpec::validate(const FrameSpec& frames) const {
  if (seg_frames < 1) throw ConfigError("seg_frames must be at least 1");
  if (seg_hop_ms <= 0 || seg_hop_ms % frames.hop_ms != 0)
    throw ConfigError("seg_hop_ms must be a positive multiple of hop_ms (" +
                      std::to_string(frames.hop_ms) + ")");
}

int frame_count(long n_samples, int sample_rate, const FrameSpec& spec) {
  spec.validate(sample_rate);
  const long win = spec.win_samples(sample_rate);
  const long hop = spec.hop_samples(sample_rate);
  if (n_samples < win)
    throw DataError("utterance too short: " + std::to_string(n_samples) + " samples < window of " +
                    std::to_string(win));
  return static_cast<int>((n_samples - win) / hop + 1);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges_hz(const FrameSpec& spec, int sample_rate) {
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(spec.n_mels + 2);
  for (int i = 0; i < spec.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_hi * i / static_cast<double>(spec.n_mels + 1));
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FrameSpec& spec, int sample_rate) {
  auto edges = mel_edges_hz(spec, sample_rate);
  return {edges.begin() + 1, edges.end() - 1};
}

Matrix mel_filterbank(const FrameSpec& spec, int sample_rate) {
  spec.validate(sample_rate);
  const int n_bins = spec.fft_len / 2 + 1;
  const auto edges = mel_edges_hz(spec, sample_rate);
  Matrix fb = Matrix::Zero(spec.n_mels, n_bins);
  for (int m = 0; m < spec.n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / spec.fft_len;
      const double w = std::min((f - lo) / (center - lo), (hi - f) / (hi - center));
      if (w > 0.0) fb(m, k) = w;
    }
    const double peak = fb.row(m).maxCoeff();
    if (peak <= 0.0)
      throw ConfigError("mel filter " + std::to_string(m) + " is empty: n_mels " +
                        std::to_string(spec.n_mels) + " too large for fft_len " +
                        std::to_string(spec.fft_len) + " at " + std::to_string(sample_rate) + " Hz");
    fb.row(m) /= peak;
  }
  return fb;
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(length));
  return w;
}

LogMelSpectrogram log_mel_spectrogram(const AudioClip& clip, const FrameSpec& spec) {
  clip.validate();
  const int n_frames = frame_count(static_cast<long>(clip.samples.size()), clip.sample_rate, spec);
  const int win = spec.win_samples(clip.sample_rate);
  const int hop = spec.hop_samples(clip.sample_rate);
  const Matrix fb = mel_filterbank(spec, clip.sample_rate);
  const auto window = hann_window(win);

  LogMelSpectrogram out;
  out.utterance_id = clip.utterance_id;
  out.values.resize(spec.n_mels, n_frames);
  out.frame_times.resize(n_frames);

  RealFft fft(spec.fft_len);
  std::vector<double> power;
  for (int f = 0; f < n_frames; ++f) {
    double* in = fft.input();
    const double* src = clip.samples.data() + static_cast<std::size_t>(f) * hop;
    for (int n = 0; n < win; ++n) in[n] = src[n] * window[n];
    std::fill(in + win, in + spec.fft_len, 0.0);
    fft.power(power);
    Eigen::Map<const Vector> p(power.data(), static_cast<Eigen::Index>(power.size()));
    Vector energies = fb * p;
    for (int m = 0; m < spec.n_mels; ++m)
      out.values(m, f) = std::log(std::max(energies[m], kLogFloor));
    out.frame_times[f] = static_cast<double>(f) * spec.hop_ms;
  }
  return out;
}

int segment_count(int n_frames, const SegmentSpec& seg, const FrameSpec& frames) {
  seg.validate(frames);
  if (n_frames < seg.seg_frames)
    throw DataError("utterance too short for one segment: " + std::to_string(n_frames) +
                    " frames < " + std::to_string(seg.seg_frames));
  return (n_frames - seg.seg_frames) / seg.hop_frames(frames) + 1;
}

std::vector<Segment> segment_spectrogram(const LogMelSpectrogram& s, const SegmentSpec& seg,
                                         const FrameSpec& frames) {
  const int n = segment_count(s.n_frames(), seg, frames);
  const int h = seg.hop_frames(frames);
  std::vector<Segment> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].values = s.values.middleCols(static_cast<Eigen::Index>(i) * h, seg.seg_frames);
    out[i].utterance_id = s.utterance_id;
    out[i].index = i;
  }
  return out;
}

int segment_duration_ms(const SegmentSpec& seg, const FrameSpec& frames) {
  return seg.seg_frames * frames.hop_ms + (frames.win_ms - frames.hop_ms);
}

// --- WAV I/O ---------------------------------------------------------------

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::ofstream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put_u16(std::ofstream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::string& path, const std::string& utterance_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = read_u32(&buf[pos + 4]);
    const unsigned char* body = &buf[pos + 8];
    const std::size_t avail = buf.size() - pos - 8;
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      if (len < 16 || avail < 16) throw DataError("truncated fmt chunk: " + path);
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      if (format == 0xFFFE && len >= 26) format = read_u16(body + 24);  // WAVE_FORMAT_EXTENSIBLE
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      data = body;
      data_len = std::min<std::size_t>(len, avail);
    }
    pos += 8 + len + (len & 1u);
  }
  if (channels == 0) throw DataError("missing fmt chunk: " + path);
  if (channels != 1)
    throw DataError("multi-channel WAV not supported (" + std::to_string(channels) +
                    " channels): " + path);
  if (data == nullptr) throw DataError("missing data chunk: " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.utterance_id = utterance_id;
  if (format == 1 && bits == 16) {
    clip.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
      clip.samples[i] = static_cast<std::int16_t>(read_u16(data + 2 * i)) / 32768.0;
  } else if (format == 3 && bits == 32) {
    clip.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
      const std::uint32_t u = read_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      clip.samples[i] = f;
    }
  } else {
    throw DataError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits): " + path);
  }
  return clip;
}

void write_wav_pcm16(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write WAV file: " + path);
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_len);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(sample_rate));
  put_u32(os, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_len);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
}

}  // namespace epr
