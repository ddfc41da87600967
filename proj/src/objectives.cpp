#include "mfnet/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace mfnet {

namespace {

void require_same_grid(const Spectrogram& a, const Spectrogram& b, const char* what) {
  if (a.frames != b.frames || a.bins != b.bins) {
    throw ShapeError(std::string(what) + ": spectrogram grids differ, " +
                     std::to_string(a.frames) + "x" + std::to_string(a.bins) + " vs " +
                     std::to_string(b.frames) + "x" + std::to_string(b.bins));
  }
}

double energy(const Waveform& w) {
  double e = 0.0;
  for (double s : w.samples) e += s * s;
  return e;
}

void require_metric_pair(const Waveform& reference, const Waveform& estimate, const char* what) {
  if (reference.samples.size() != estimate.samples.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch, " +
                                std::to_string(reference.samples.size()) + " vs " +
                                std::to_string(estimate.samples.size()) + " samples");
  }
  if (reference.samples.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty signals");
  }
}

double cap_db(double v) { return std::clamp(v, -kMetricCapDb, kMetricCapDb); }

}  // namespace

double loss_abs(const Spectrogram& target, const Spectrogram& pred) {
  require_same_grid(target, pred, "loss_abs");
  double acc = 0.0;
  for (size_t i = 0; i < target.data.size(); ++i) {
    const double d = std::abs(static_cast<double>(target.data[i])) -
                     std::abs(static_cast<double>(pred.data[i]));
    acc += d * d;
  }
  return acc / static_cast<double>(target.data.size());
}

double loss_polar(const Spectrogram& target, const Spectrogram& pred) {
  require_same_grid(target, pred, "loss_polar");
  double acc = 0.0;
  for (size_t i = 0; i < target.data.size(); ++i) {
    const double d = static_cast<double>(target.data[i]) - static_cast<double>(pred.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(target.data.size());
}

double loss_mfnet(const Spectrogram& target, const Spectrogram& pred, double gamma) {
  detail::require_gamma(gamma);
  return gamma * loss_abs(target, pred) + (1.0 - gamma) * loss_polar(target, pred);
}

double snr_db(const Waveform& reference, const Waveform& estimate) {
  require_metric_pair(reference, estimate, "snr_db");
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) {
    throw std::invalid_argument("snr_db: reference signal is all zeros");
  }
  double err_energy = 0.0;
  for (size_t i = 0; i < reference.samples.size(); ++i) {
    const double d = reference.samples[i] - estimate.samples[i];
    err_energy += d * d;
  }
  if (err_energy == 0.0) return kMetricCapDb;
  return cap_db(10.0 * std::log10(ref_energy / err_energy));
}

double si_sdr_db(const Waveform& reference, const Waveform& estimate) {
  require_metric_pair(reference, estimate, "si_sdr_db");
  const size_t n = reference.samples.size();

  double ref_mean = 0.0, est_mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ref_mean += reference.samples[i];
    est_mean += estimate.samples[i];
  }
  ref_mean /= static_cast<double>(n);
  est_mean /= static_cast<double>(n);

  double dot = 0.0, ref_energy = 0.0, est_energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = reference.samples[i] - ref_mean;
    const double e = estimate.samples[i] - est_mean;
    dot += r * e;
    ref_energy += r * r;
    est_energy += e * e;
  }
  if (ref_energy == 0.0 || est_energy == 0.0) {
    throw std::invalid_argument("si_sdr_db: a signal is constant (zero energy after centering)");
  }

  // Project the estimate onto the reference; the scaled reference is the
  // "signal" part and the rest is distortion.
  const double alpha = dot / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  if (target_energy == 0.0) return -kMetricCapDb;  // orthogonal estimate
  double residual = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = reference.samples[i] - ref_mean;
    const double e = estimate.samples[i] - est_mean;
    const double d = e - alpha * r;
    residual += d * d;
  }
  if (residual == 0.0) return kMetricCapDb;
  return cap_db(10.0 * std::log10(target_energy / residual));
}

}  // namespace mfnet
