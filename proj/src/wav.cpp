#include "mfnet/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace mfnet {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr int kSupportedRate = 16000;

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(static_cast<uint16_t>(p[0]) |
                               (static_cast<uint16_t>(p[1]) << 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path);
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + chunk_len > bytes.size()) {
      throw FormatError("truncated WAV chunk in " + path);
    }
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw FormatError("malformed fmt chunk in " + path);
      const unsigned char* f = bytes.data() + pos;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_len = chunk_len;
    }
    pos += chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) {
    throw FormatError("WAV file missing fmt or data chunk: " + path);
  }
  if (channels != 1) {
    throw FormatError("unsupported WAV: " + std::to_string(channels) +
                      " channels (need mono): " + path);
  }
  if (rate != kSupportedRate) {
    throw FormatError("unsupported WAV sample rate " + std::to_string(rate) + " (need " +
                      std::to_string(kSupportedRate) + "): " + path);
  }

  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const size_t count = data_len / 2;
    wave.samples.resize(count);
    for (size_t i = 0; i < count; ++i) {
      const uint16_t raw = read_u16(data + 2 * i);
      wave.samples[i] = static_cast<double>(static_cast<int16_t>(raw)) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const size_t count = data_len / 4;
    wave.samples.resize(count);
    for (size_t i = 0; i < count; ++i) {
      const uint32_t raw = read_u32(data + 4 * i);
      float v = 0.0f;
      std::memcpy(&v, &raw, 4);
      wave.samples[i] = static_cast<double>(v);
    }
  } else {
    throw FormatError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits): " + path);
  }
  return wave;
}

void write_wav(const std::string& path, const Waveform& wave, WavEncoding encoding) {
  if (wave.sample_rate <= 0) throw std::invalid_argument("write_wav: bad sample rate");
  const uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const uint32_t bytes_per_sample = bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(wave.samples.size()) * bytes_per_sample;

  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<uint32_t>(wave.sample_rate) * bytes_per_sample);
  put_u16(out, static_cast<uint16_t>(bytes_per_sample));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_len);

  if (encoding == WavEncoding::kPcm16) {
    for (double s : wave.samples) {
      const double scaled = std::round(s * 32768.0);
      const int32_t clamped =
          static_cast<int32_t>(std::clamp(scaled, -32768.0, 32767.0));
      put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(clamped)));
    }
  } else {
    for (double s : wave.samples) {
      const float v = static_cast<float>(s);
      uint32_t raw = 0;
      std::memcpy(&raw, &v, 4);
      put_u32(out, raw);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("short write to " + path);
}

}  // namespace mfnet
