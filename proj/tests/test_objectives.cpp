#include <cmath>
#include <vector>

#include <doctest.h>

#include "mfnet/objectives.hpp"

using namespace mfnet;
using DTensor = TensorT<double>;

namespace {

DTensor random_map(const Shape& shape, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal();
  return DTensor::from_values(shape, std::move(v));
}

Waveform make_wave(std::vector<double> samples) {
  Waveform w;
  w.samples = std::move(samples);
  return w;
}

Spectrogram make_spec(int64_t frames, int64_t bins, uint64_t seed) {
  Spectrogram s;
  s.frames = frames;
  s.bins = bins;
  s.spec = FrameSpec::sqrt_hann(320, 160);
  s.sample_rate = 16000;
  s.data.resize(static_cast<size_t>(frames * bins));
  Rng rng(seed);
  for (auto& v : s.data) v = static_cast<float>(rng.normal());
  return s;
}

}  // namespace

TEST_CASE("all losses vanish when prediction equals target") {
  auto t = random_map({2, 5}, 1);
  for (double gamma : {0.0, 0.25, 0.5, 1.0}) {
    CHECK(loss_mfnet(t, t, gamma).item() == 0.0);
  }
  CHECK(loss_abs(t, t).item() == 0.0);
  CHECK(loss_polar(t, t).item() == 0.0);
}

TEST_CASE("sign flips are invisible to the magnitude loss but not the signed loss") {
  auto t = DTensor::from_values({1, 1}, {1.0});
  auto p = DTensor::from_values({1, 1}, {-1.0});
  CHECK(loss_abs(t, p).item() == 0.0);
  CHECK(loss_polar(t, p).item() == 4.0);
  // The blend interpolates linearly between the two.
  CHECK(loss_mfnet(t, p, 0.5).item() == doctest::Approx(2.0));
  CHECK(loss_mfnet(t, p, 1.0).item() == 0.0);
  CHECK(loss_mfnet(t, p, 0.0).item() == 4.0);
}

TEST_CASE("same-sign errors hit both losses equally") {
  auto t = DTensor::from_values({1, 1}, {3.0});
  auto p = DTensor::from_values({1, 1}, {1.0});
  CHECK(loss_abs(t, p).item() == 4.0);
  CHECK(loss_polar(t, p).item() == 4.0);
  CHECK(loss_mfnet(t, p, 0.5).item() == 4.0);
}

TEST_CASE("gamma outside the unit interval is rejected") {
  auto t = random_map({2, 2}, 2);
  CHECK_THROWS_AS(loss_mfnet(t, t, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(loss_mfnet(t, t, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(loss_mfnet(t, t, std::nan("")), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(loss_abs(random_map({2, 3}, 3), random_map({3, 2}, 4)), ShapeError);
}

TEST_CASE("the magnitude loss never exceeds the signed loss") {
  // ||a|-|b|| <= |a-b| pointwise, so the means obey the same order.
  for (uint64_t seed = 0; seed < 50; ++seed) {
    auto t = random_map({4, 25}, 2 * seed);
    auto p = random_map({4, 25}, 2 * seed + 1);
    CHECK(loss_abs(t, p).item() <= loss_polar(t, p).item() + 1e-12);
  }
}

TEST_CASE("gamma endpoints reproduce the pure losses on random data") {
  auto t = random_map({3, 7}, 11);
  auto p = random_map({3, 7}, 12);
  CHECK(loss_mfnet(t, p, 1.0).item() == doctest::Approx(loss_abs(t, p).item()).epsilon(1e-12));
  CHECK(loss_mfnet(t, p, 0.0).item() == doctest::Approx(loss_polar(t, p).item()).epsilon(1e-12));
}

TEST_CASE("spectrogram loss overloads match a direct double-loop evaluation") {
  auto a = make_spec(6, 20, 13);
  auto b = make_spec(6, 20, 14);
  double abs_ref = 0.0, polar_ref = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    const double da = std::abs(x) - std::abs(y);
    abs_ref += da * da;
    polar_ref += (x - y) * (x - y);
  }
  abs_ref /= static_cast<double>(a.data.size());
  polar_ref /= static_cast<double>(a.data.size());

  CHECK(loss_abs(a, b) == doctest::Approx(abs_ref).epsilon(1e-9));
  CHECK(loss_polar(a, b) == doctest::Approx(polar_ref).epsilon(1e-9));
  CHECK(loss_mfnet(a, b, 0.3) ==
        doctest::Approx(0.3 * abs_ref + 0.7 * polar_ref).epsilon(1e-9));

  auto c = make_spec(6, 21, 15);
  CHECK_THROWS_AS(loss_abs(a, c), ShapeError);
  CHECK_THROWS_AS(loss_mfnet(a, c, 1.5), std::invalid_argument);
}

TEST_CASE("spectrogram and tensor losses agree") {
  auto a = make_spec(4, 16, 16);
  auto b = make_spec(4, 16, 17);
  auto ta = DTensor::from_values({4, 16}, std::vector<double>(a.data.begin(), a.data.end()));
  auto tb = DTensor::from_values({4, 16}, std::vector<double>(b.data.begin(), b.data.end()));
  CHECK(loss_mfnet(a, b, 0.5) ==
        doctest::Approx(loss_mfnet(ta, tb, 0.5).item()).epsilon(1e-9));
}

TEST_CASE("snr of an exact estimate caps out") {
  auto ref = make_wave({0.1, -0.2, 0.3, 0.0});
  CHECK(snr_db(ref, ref) == kMetricCapDb);
}

TEST_CASE("snr matches hand-computed energies") {
  auto ref = make_wave({1.0, 0.0, -1.0, 0.0});
  auto est = make_wave({1.1, 0.0, -0.9, 0.0});
  // error energy 0.02, reference energy 2 -> 10 log10(100) = 20 dB.
  CHECK(snr_db(ref, est) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("snr input validation") {
  auto ref = make_wave({1.0, 2.0});
  CHECK_THROWS_AS(snr_db(ref, make_wave({1.0})), std::invalid_argument);
  CHECK_THROWS_AS(snr_db(make_wave({}), make_wave({})), std::invalid_argument);
  CHECK_THROWS_AS(snr_db(make_wave({0.0, 0.0}), make_wave({1.0, 1.0})),
                  std::invalid_argument);
}

TEST_CASE("si-sdr is invariant to rescaling the estimate") {
  Rng rng(21);
  std::vector<double> r(256), e(256);
  for (size_t i = 0; i < r.size(); ++i) {
    r[i] = rng.normal();
    e[i] = r[i] + 0.1 * rng.normal();
  }
  auto ref = make_wave(r);
  const double base = si_sdr_db(ref, make_wave(e));
  for (double s : {0.5, 2.0, -3.0}) {
    std::vector<double> scaled(e);
    for (auto& v : scaled) v *= s;
    CHECK(si_sdr_db(ref, make_wave(scaled)) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("si-sdr of a scaled copy caps at the maximum") {
  auto ref = make_wave({0.5, -0.25, 0.75, -1.0});
  auto est = make_wave({1.0, -0.5, 1.5, -2.0});
  CHECK(si_sdr_db(ref, est) == kMetricCapDb);
}

TEST_CASE("si-sdr of an orthogonal estimate caps at the minimum") {
  // After mean removal these are orthogonal, so the projection is zero.
  auto ref = make_wave({1.0, -1.0, 1.0, -1.0});
  auto est = make_wave({1.0, 1.0, -1.0, -1.0});
  CHECK(si_sdr_db(ref, est) == -kMetricCapDb);
}

TEST_CASE("si-sdr rejects degenerate inputs") {
  CHECK_THROWS_AS(si_sdr_db(make_wave({1.0, 1.0}), make_wave({0.5, 0.5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(si_sdr_db(make_wave({}), make_wave({})), std::invalid_argument);
}

TEST_CASE("snr improves when noise shrinks") {
  Rng rng(23);
  std::vector<double> clean(512), noise(512);
  for (size_t i = 0; i < clean.size(); ++i) {
    clean[i] = std::sin(0.05 * static_cast<double>(i));
    noise[i] = 0.1 * rng.normal();
  }
  auto ref = make_wave(clean);
  std::vector<double> noisy(clean), less_noisy(clean);
  for (size_t i = 0; i < clean.size(); ++i) {
    noisy[i] += noise[i];
    less_noisy[i] += 0.25 * noise[i];
  }
  CHECK(snr_db(ref, make_wave(less_noisy)) > snr_db(ref, make_wave(noisy)) + 10.0);
  CHECK(si_sdr_db(ref, make_wave(less_noisy)) > si_sdr_db(ref, make_wave(noisy)));
}
