#include "mfnet/model.hpp"

namespace mfnet {

std::string head_mode_name(HeadMode mode) {
  switch (mode) {
    case HeadMode::kMasking:
      return "masking";
    case HeadMode::kMapSpeech:
      return "map_speech";
    case HeadMode::kMapReverseNoise:
      return "map_reverse_noise";
  }
  throw ConfigError("unknown head mode value");
}

HeadMode head_mode_from_name(const std::string& name) {
  if (name == "masking") return HeadMode::kMasking;
  if (name == "map_speech") return HeadMode::kMapSpeech;
  if (name == "map_reverse_noise") return HeadMode::kMapReverseNoise;
  throw ConfigError("unknown head mode '" + name +
                    "' (expected masking, map_speech, or map_reverse_noise)");
}

namespace {

int64_t glfb_params(int64_t c) {
  // norms: 2 * 2c; pc1: 2c^2 + 2c; dw (depthwise 3x3 on 2c): 9 * 2c + 2c;
  // sca: c^2 + c; pc2: c^2 + c; pc3: 2c^2 + 2c; pc4: c^2 + c.
  return 4 * c + (2 * c * c + 2 * c) + (18 * c + 2 * c) + 3 * (c * c + c) + (2 * c * c + 2 * c);
}

int64_t glfb_macs(int64_t c, int64_t t, int64_t f) {
  int64_t macs = 0;
  macs += conv2d_macs(c, 2 * c, 1, 1, 1, t, f);          // pc1
  macs += conv2d_macs(2 * c, 2 * c, 2 * c, 3, 3, t, f);  // dw
  macs += conv2d_macs(c, c, 1, 1, 1, 1, 1);              // sca on pooled [c,1,1]
  macs += conv2d_macs(c, c, 1, 1, 1, t, f);              // pc2
  macs += conv2d_macs(c, 2 * c, 1, 1, 1, t, f);          // pc3
  macs += conv2d_macs(c, c, 1, 1, 1, t, f);              // pc4
  return macs;
}

}  // namespace

ModelCosts count_params_and_macs(const ModelConfig& cfg, double frames_per_second, int64_t bins) {
  cfg.validate();
  if (frames_per_second <= 0.0 || bins <= 0 || bins % 16 != 0) {
    throw std::invalid_argument("count_params_and_macs: need positive rate and bins % 16 == 0");
  }

  // MACs scale linearly in T once T is divisible by 16, so evaluate one
  // 16-frame tile exactly and rescale to frames_per_second.
  const int64_t t0 = 16;
  int64_t params = 0;
  int64_t macs_tile = 0;

  const int64_t n = cfg.base_channels;
  params += n * 1 * 9 + n;  // input projection
  macs_tile += conv2d_macs(1, n, 1, 3, 3, t0, bins);

  int64_t c = n;
  int64_t t = t0, f = bins;
  for (int stage = 0; stage < 4; ++stage) {
    const int64_t depth = cfg.encoder_depths[static_cast<size_t>(stage)];
    params += depth * glfb_params(c);
    macs_tile += depth * glfb_macs(c, t, f);
    params += 2 * c * c * 4 + 2 * c;  // 2x2 stride-2 downsample, c -> 2c
    macs_tile += conv2d_macs(c, 2 * c, 1, 2, 2, t / 2, f / 2);
    c *= 2;
    t /= 2;
    f /= 2;
  }

  params += cfg.bottleneck_depth * glfb_params(c);
  macs_tile += cfg.bottleneck_depth * glfb_macs(c, t, f);

  for (int stage = 0; stage < 4; ++stage) {
    params += 2 * c * c + 2 * c;  // 1x1 up projection, c -> 2c
    macs_tile += conv2d_macs(c, 2 * c, 1, 1, 1, t, f);
    c /= 2;
    t *= 2;
    f *= 2;
    const int64_t depth = cfg.decoder_depths[static_cast<size_t>(stage)];
    params += depth * glfb_params(c);
    macs_tile += depth * glfb_macs(c, t, f);
  }

  params += 1 * n * 9 + 1;  // output projection
  macs_tile += conv2d_macs(n, 1, 1, 3, 3, t0, bins);

  ModelCosts costs;
  costs.params = params;
  costs.macs_per_second =
      static_cast<double>(macs_tile) * frames_per_second / static_cast<double>(t0);
  return costs;
}

Tensor tensor_from_spectrogram(const Spectrogram& spec) {
  if (spec.frames <= 0 || spec.bins <= 0 ||
      spec.data.size() != static_cast<size_t>(spec.frames * spec.bins)) {
    throw ShapeError("spectrogram has inconsistent dimensions");
  }
  return Tensor::from_values({1, 1, spec.frames, spec.bins}, spec.data);
}

Spectrogram spectrogram_from_tensor(const Tensor& x, const FrameSpec& spec, int sample_rate) {
  if (x.rank() != 4 || x.dim(0) != 1 || x.dim(1) != 1) {
    throw ShapeError("spectrogram tensor must be [1,1,frames,bins], got " + shape_str(x.shape()));
  }
  Spectrogram out;
  out.frames = x.dim(2);
  out.bins = x.dim(3);
  out.data = x.values();
  out.spec = spec;
  out.sample_rate = sample_rate;
  return out;
}

Spectrogram enhance_spectrogram(const Spectrogram& noisy, const Model<float>& model) {
  NoGradGuard no_grad;
  const Tensor x = tensor_from_spectrogram(noisy);
  const Tensor y = model.forward(x);
  return spectrogram_from_tensor(y, noisy.spec, noisy.sample_rate);
}

}  // namespace mfnet
