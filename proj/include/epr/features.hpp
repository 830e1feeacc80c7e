// SPDX-License-Identifier: Apache-2.0
//
// Audio framing, log-Mel spectrograms and fixed-size segmentation.

#ifndef EPR_FEATURES_HPP_
#define EPR_FEATURES_HPP_

#include <string>
#include <vector>

#include "epr/common.hpp"

namespace epr {

struct AudioClip {
  std::vector<double> samples;  // mono PCM in [-1, 1]
  int sample_rate = 16000;
  std::string utterance_id;

  /// Throws DataError if the clip violates its invariants.
  void validate() const;
};

struct FrameSpec {
  int win_ms = 25;
  int hop_ms = 10;
  int fft_len = 512;
  int n_mels = 64;

  int win_samples(int sample_rate) const { return win_ms * sample_rate / 1000; }
  int hop_samples(int sample_rate) const { return hop_ms * sample_rate / 1000; }
  void validate(int sample_rate) const;
};

struct LogMelSpectrogram {
  Matrix values;                   // n_mels x F, natural-log energies
  std::vector<double> frame_times; // frame start offsets in ms
  std::string utterance_id;

  int n_frames() const { return static_cast<int>(values.cols()); }
};

struct SegmentSpec {
  int seg_frames = 32;
  int seg_hop_ms = 30;

  /// Segment hop expressed in frames; seg_hop_ms must be a multiple of hop_ms.
  int hop_frames(const FrameSpec& frames) const;
  void validate(const FrameSpec& frames) const;
};

struct Segment {
  Matrix values;  // n_mels x seg_frames
  std::string utterance_id;
  int index = 0;
};

/// Floor applied before the log so silence maps to ln(1e-10).
inline constexpr double kLogFloor = 1e-10;

/// Number of whole frames in a clip; the tail that does not fill a window is dropped.
int frame_count(long n_samples, int sample_rate, const FrameSpec& spec);

/// Peak-normalized triangular filters, n_mels x (fft_len/2 + 1), with centers
/// equally spaced on the HTK mel scale between 0 Hz and Nyquist.
Matrix mel_filterbank(const FrameSpec& spec, int sample_rate);

/// Center frequencies (Hz) of the filters built by mel_filterbank().
std::vector<double> mel_center_frequencies(const FrameSpec& spec, int sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window, w[n] = 0.5 - 0.5 cos(2 pi n / length).
std::vector<double> hann_window(int length);

LogMelSpectrogram log_mel_spectrogram(const AudioClip& clip, const FrameSpec& spec);

/// Number of segments for F frames; throws DataError if F < seg_frames.
int segment_count(int n_frames, const SegmentSpec& seg, const FrameSpec& frames);

std::vector<Segment> segment_spectrogram(const LogMelSpectrogram& s, const SegmentSpec& seg,
                                         const FrameSpec& frames);

/// Wall-clock span of one segment in ms: seg_frames * hop + (win - hop).
int segment_duration_ms(const SegmentSpec& seg, const FrameSpec& frames);

// --- WAV I/O ---------------------------------------------------------------

/// Reads a mono 16-bit PCM or 32-bit float WAV file. Multi-channel input is
/// rejected with a DataError.
AudioClip read_wav(const std::string& path, const std::string& utterance_id = "");

/// Writes a mono 16-bit PCM WAV file (used by tests and examples).
void write_wav_pcm16(const std::string& path, const std::vector<double>& samples, int sample_rate);

}  // namespace epr

#endif  // EPR_FEATURES_HPP_
