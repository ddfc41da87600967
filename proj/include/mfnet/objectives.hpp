#pragma once

#include "mfnet/dsp.hpp"
#include "mfnet/tensor.hpp"

namespace mfnet {

// Metric values are capped at +/- 99.99 dB so degenerate cases (zero error,
// orthogonal estimate) stay finite and machine-comparable.
inline constexpr double kMetricCapDb = 99.99;

namespace detail {
template <typename T>
void require_loss_pair(const TensorT<T>& target, const TensorT<T>& pred) {
  if (target.shape() != pred.shape()) {
    throw ShapeError("loss: target " + shape_str(target.shape()) + " vs prediction " +
                     shape_str(pred.shape()));
  }
}

inline void require_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("loss_mfnet: gamma must be in [0,1], got " +
                                std::to_string(gamma));
  }
}
}  // namespace detail

// Mean squared difference of coefficient magnitudes. Insensitive to sign
// errors; the magnitude subgradient at zero is zero.
template <typename T>
TensorT<T> loss_abs(const TensorT<T>& target, const TensorT<T>& pred) {
  detail::require_loss_pair(target, pred);
  auto d = sub(abs(target), abs(pred));
  return mean(mul(d, d));
}

// Mean squared difference of the signed coefficients.
template <typename T>
TensorT<T> loss_polar(const TensorT<T>& target, const TensorT<T>& pred) {
  detail::require_loss_pair(target, pred);
  auto d = sub(target, pred);
  return mean(mul(d, d));
}

// Convex blend gamma * loss_abs + (1 - gamma) * loss_polar.
template <typename T>
TensorT<T> loss_mfnet(const TensorT<T>& target, const TensorT<T>& pred, double gamma = 0.5) {
  detail::require_gamma(gamma);
  return add(scale(loss_abs(target, pred), gamma), scale(loss_polar(target, pred), 1.0 - gamma));
}

// Double-precision scalar versions over spectrograms, for reporting.
double loss_abs(const Spectrogram& target, const Spectrogram& pred);
double loss_polar(const Spectrogram& target, const Spectrogram& pred);
double loss_mfnet(const Spectrogram& target, const Spectrogram& pred, double gamma = 0.5);

// 10 log10(||ref||^2 / ||ref - est||^2), capped to +/- kMetricCapDb.
double snr_db(const Waveform& reference, const Waveform& estimate);

// Scale-invariant SDR: both signals are made zero-mean, the estimate is
// projected onto the reference, and the ratio of projection to residual
// energy is reported in dB (capped).
double si_sdr_db(const Waveform& reference, const Waveform& estimate);

}  // namespace mfnet
