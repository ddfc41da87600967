#include "mfnet/dsp.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace mfnet {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Precomputed orthonormal DCT-II basis for one frame length. `fwd` is laid out
// row-major by output coefficient, `inv` by output sample, so both directions
// run as cache-friendly dot products.
struct DctPlan {
  int64_t n = 0;
  std::vector<double> fwd;  // fwd[k * n + j] = s_k * cos(pi * (2j + 1) * k / (2n))
  std::vector<double> inv;  // inv[j * n + k] = fwd[k * n + j]

  explicit DctPlan(int64_t n_in) : n(n_in) {
    fwd.resize(static_cast<size_t>(n * n));
    inv.resize(static_cast<size_t>(n * n));
    const double scale = std::sqrt(2.0 / static_cast<double>(n));
    const double c0 = 1.0 / std::sqrt(2.0);
    for (int64_t k = 0; k < n; ++k) {
      const double sk = scale * (k == 0 ? c0 : 1.0);
      for (int64_t j = 0; j < n; ++j) {
        const double v = sk * std::cos(kPi * static_cast<double>(2 * j + 1) *
                                       static_cast<double>(k) / (2.0 * static_cast<double>(n)));
        fwd[static_cast<size_t>(k * n + j)] = v;
        inv[static_cast<size_t>(j * n + k)] = v;
      }
    }
  }
};

const DctPlan& plan_for(int64_t n) {
  static std::mutex mu;
  static std::map<int64_t, std::unique_ptr<DctPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, std::make_unique<DctPlan>(n)).first;
  }
  return *it->second;
}

// Dot product with four accumulators so -O3 can vectorize without
// reassociation flags.
double dot(const double* a, const double* b, int64_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

std::vector<double> apply_plan(const std::vector<double>& x, const std::vector<double>& table) {
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    out[static_cast<size_t>(k)] = dot(table.data() + k * n, x.data(), n);
  }
  return out;
}

}  // namespace

std::vector<double> dct2(const std::vector<double>& frame) {
  if (frame.empty()) throw std::invalid_argument("dct2: empty frame");
  return apply_plan(frame, plan_for(static_cast<int64_t>(frame.size())).fwd);
}

std::vector<double> idct2(const std::vector<double>& coeffs) {
  if (coeffs.empty()) throw std::invalid_argument("idct2: empty coefficient vector");
  return apply_plan(coeffs, plan_for(static_cast<int64_t>(coeffs.size())).inv);
}

FrameSpec FrameSpec::sqrt_hann(int64_t window_len, int64_t hop) {
  if (window_len < 2 || hop < 1 || hop > window_len) {
    throw std::invalid_argument("FrameSpec: need window_len >= 2 and 1 <= hop <= window_len");
  }
  FrameSpec spec;
  spec.window_len = window_len;
  spec.hop = hop;
  spec.window.resize(static_cast<size_t>(window_len));
  for (int64_t i = 0; i < window_len; ++i) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(window_len));
    spec.window[static_cast<size_t>(i)] = std::sqrt(hann);
  }
  return spec;
}

int64_t stdct_frame_count(int64_t samples, const FrameSpec& spec) {
  if (samples < spec.window_len) {
    throw std::invalid_argument("stdct: input shorter than one window (" +
                                std::to_string(samples) + " < " +
                                std::to_string(spec.window_len) + " samples)");
  }
  // Padded span is samples + 2 * hop; the last frame is allowed to run into
  // extra trailing zeros so the span is fully tiled.
  const int64_t span = samples + 2 * spec.hop - spec.window_len;
  return (span + spec.hop - 1) / spec.hop + 1;
}

Spectrogram stdct(const Waveform& wave, const FrameSpec& spec) {
  if (static_cast<int64_t>(spec.window.size()) != spec.window_len) {
    throw std::invalid_argument("stdct: frame spec window not initialized");
  }
  const int64_t len = wave.size();
  const int64_t frames = stdct_frame_count(len, spec);
  const int64_t n = spec.window_len;
  const int64_t hop = spec.hop;

  Spectrogram out;
  out.frames = frames;
  out.bins = n;
  out.data.resize(static_cast<size_t>(frames * n));
  out.spec = spec;
  out.sample_rate = wave.sample_rate;

  const DctPlan& plan = plan_for(n);
  std::vector<double> frame(static_cast<size_t>(n));
  for (int64_t f = 0; f < frames; ++f) {
    const int64_t start = f * hop - hop;  // frame start in original sample coordinates
    for (int64_t j = 0; j < n; ++j) {
      const int64_t src = start + j;
      const double s = (src >= 0 && src < len) ? wave.samples[static_cast<size_t>(src)] : 0.0;
      frame[static_cast<size_t>(j)] = s * spec.window[static_cast<size_t>(j)];
    }
    for (int64_t k = 0; k < n; ++k) {
      out.data[static_cast<size_t>(f * n + k)] =
          static_cast<float>(dot(plan.fwd.data() + k * n, frame.data(), n));
    }
  }
  return out;
}

Waveform istdct(const Spectrogram& spec, int64_t out_len) {
  const FrameSpec& fs = spec.spec;
  if (static_cast<int64_t>(fs.window.size()) != fs.window_len || spec.bins != fs.window_len) {
    throw std::invalid_argument("istdct: spectrogram bins do not match its frame spec");
  }
  const int64_t expected = stdct_frame_count(out_len, fs);
  if (expected != spec.frames) {
    throw std::invalid_argument("istdct: out_len " + std::to_string(out_len) + " implies " +
                                std::to_string(expected) + " frames, spectrogram has " +
                                std::to_string(spec.frames));
  }

  const int64_t n = fs.window_len;
  const int64_t hop = fs.hop;
  const int64_t padded = (spec.frames - 1) * hop + n;
  std::vector<double> acc(static_cast<size_t>(padded), 0.0);

  const DctPlan& plan = plan_for(n);
  std::vector<double> coeffs(static_cast<size_t>(n));
  for (int64_t f = 0; f < spec.frames; ++f) {
    for (int64_t k = 0; k < n; ++k) {
      coeffs[static_cast<size_t>(k)] = spec.data[static_cast<size_t>(f * n + k)];
    }
    for (int64_t j = 0; j < n; ++j) {
      const double sample = dot(plan.inv.data() + j * n, coeffs.data(), n);
      acc[static_cast<size_t>(f * hop + j)] += sample * fs.window[static_cast<size_t>(j)];
    }
  }

  Waveform wave;
  wave.sample_rate = spec.sample_rate;
  wave.samples.resize(static_cast<size_t>(out_len));
  // Window pairs sum to one over the original sample range, so dropping the
  // hop of leading pad recovers the signal directly.
  for (int64_t i = 0; i < out_len; ++i) {
    wave.samples[static_cast<size_t>(i)] = acc[static_cast<size_t>(i + hop)];
  }
  return wave;
}

}  // namespace mfnet
