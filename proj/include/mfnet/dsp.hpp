#pragma once

#include <cstdint>
#include <vector>

#include "mfnet/common.hpp"

namespace mfnet {

// Mono audio at a fixed sample rate. Samples are kept in double so analysis /
// resynthesis round trips stay well below the 1e-6 RMS budget.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Analysis window and hop for the short-time DCT. The default is the square
// root of a periodic Hann window of 320 samples with a 160-sample hop, which
// satisfies w[n]^2 + w[n + hop]^2 = 1 so overlap-add needs no renormalization.
struct FrameSpec {
  int64_t window_len = 0;
  int64_t hop = 0;
  std::vector<double> window;

  static FrameSpec sqrt_hann(int64_t window_len = 320, int64_t hop = 160);

  bool operator==(const FrameSpec& o) const {
    return window_len == o.window_len && hop == o.hop && window == o.window;
  }
};

// Real-valued time-frequency map, row-major [frames x bins]. Coefficients are
// stored as float; the transform itself runs in double.
struct Spectrogram {
  int64_t frames = 0;
  int64_t bins = 0;
  std::vector<float> data;
  FrameSpec spec;
  int sample_rate = 16000;

  float& at(int64_t frame, int64_t bin) { return data[static_cast<size_t>(frame * bins + bin)]; }
  float at(int64_t frame, int64_t bin) const {
    return data[static_cast<size_t>(frame * bins + bin)];
  }
};

// Orthonormal DCT-II of one frame. Orthonormality makes the inverse the
// transpose and preserves the l2 norm exactly.
std::vector<double> dct2(const std::vector<double>& frame);

// Orthonormal DCT-III, the inverse of dct2.
std::vector<double> idct2(const std::vector<double>& coeffs);

// Number of analysis frames produced for `samples` input samples: the signal
// is zero-padded by one hop on both sides and the tail is extended to complete
// the final frame, so every input sample is covered by a full set of windows.
int64_t stdct_frame_count(int64_t samples, const FrameSpec& spec);

// Short-time DCT: window, then per-frame orthonormal DCT-II.
Spectrogram stdct(const Waveform& wave, const FrameSpec& spec = FrameSpec::sqrt_hann());

// Inverse short-time DCT via windowed overlap-add. `out_len` must be a sample
// count whose analysis would have produced exactly `spec.frames` frames.
Waveform istdct(const Spectrogram& spec, int64_t out_len);

}  // namespace mfnet
