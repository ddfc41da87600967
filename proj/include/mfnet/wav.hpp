#pragma once

#include <string>

#include "mfnet/dsp.hpp"

namespace mfnet {

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a mono 16 kHz RIFF/WAVE file holding PCM16 or IEEE float32 samples.
// PCM16 is decoded by dividing by 32768. Anything else (extra channels, other
// rates, other encodings) raises FormatError; there is no silent resampling.
Waveform read_wav(const std::string& path);

// Writes `wave` at its own sample rate. PCM16 samples are clamped to [-1, 1)
// and rounded; float32 samples are written verbatim.
void write_wav(const std::string& path, const Waveform& wave,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace mfnet
