#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "mfnet/wav.hpp"

using namespace mfnet;

namespace {

std::string temp_wav(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Waveform ramp_wave(int64_t len, int sample_rate = 16000) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<size_t>(len));
  for (int64_t i = 0; i < len; ++i) {
    w.samples[static_cast<size_t>(i)] = -0.9 + 1.8 * static_cast<double>(i) / (len - 1);
  }
  return w;
}

}  // namespace

TEST_CASE("float32 WAV round trip is lossless at float precision") {
  const std::string path = temp_wav("mfnet_f32.wav");
  const Waveform original = ramp_wave(500);
  write_wav(path, original, WavEncoding::kFloat32);
  const Waveform loaded = read_wav(path);
  REQUIRE(loaded.size() == original.size());
  CHECK(loaded.sample_rate == 16000);
  for (size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(loaded.samples[i] ==
          doctest::Approx(original.samples[i]).epsilon(1e-7).scale(1.0));
  }
  std::remove(path.c_str());
}

TEST_CASE("PCM16 WAV round trip is within one quantization step") {
  const std::string path = temp_wav("mfnet_pcm16.wav");
  const Waveform original = ramp_wave(500);
  write_wav(path, original, WavEncoding::kPcm16);
  const Waveform loaded = read_wav(path);
  REQUIRE(loaded.size() == original.size());
  for (size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(std::abs(loaded.samples[i] - original.samples[i]) <= 0.5 / 32768.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("PCM16 decoding divides by 32768") {
  const std::string path = temp_wav("mfnet_pcm16_exact.wav");
  Waveform w;
  w.samples = {16384.0 / 32768.0, -32768.0 / 32768.0, 1.0 / 32768.0, 0.0};
  write_wav(path, w, WavEncoding::kPcm16);
  const Waveform loaded = read_wav(path);
  CHECK(loaded.samples[0] == 16384.0 / 32768.0);
  CHECK(loaded.samples[1] == -1.0);
  CHECK(loaded.samples[2] == 1.0 / 32768.0);
  CHECK(loaded.samples[3] == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("reader rejects unsupported sample rates") {
  const std::string path = temp_wav("mfnet_44k.wav");
  write_wav(path, ramp_wave(100, 44100));
  CHECK_THROWS_AS(read_wav(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("reader rejects stereo files") {
  // Hand-build a minimal stereo PCM16 header.
  const std::string path = temp_wav("mfnet_stereo.wav");
  {
    std::vector<unsigned char> b;
    auto u32 = [&b](uint32_t v) {
      for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
    };
    auto u16 = [&b](uint16_t v) {
      b.push_back(static_cast<unsigned char>(v & 0xff));
      b.push_back(static_cast<unsigned char>(v >> 8));
    };
    auto tag = [&b](const char* t) { b.insert(b.end(), t, t + 4); };
    tag("RIFF");
    u32(36 + 8);
    tag("WAVE");
    tag("fmt ");
    u32(16);
    u16(1);      // PCM
    u16(2);      // stereo
    u32(16000);
    u32(16000 * 4);
    u16(4);
    u16(16);
    tag("data");
    u32(8);
    u16(0);
    u16(0);
    u16(0);
    u16(0);
    FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    std::fwrite(b.data(), 1, b.size(), f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_wav(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("reader rejects non-WAV bytes") {
  const std::string path = temp_wav("mfnet_notwav.bin");
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  std::fwrite("hello world, definitely not audio", 1, 33, f);
  std::fclose(f);
  CHECK_THROWS_AS(read_wav(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("reader reports missing files") {
  CHECK_THROWS_AS(read_wav("/nonexistent/path/missing.wav"), FormatError);
}
