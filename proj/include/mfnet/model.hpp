#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfnet/dsp.hpp"
#include "mfnet/ops.hpp"

namespace mfnet {

// How the network's raw output is turned into an estimate of the clean
// spectrum S from the noisy spectrum Y:
//   kMasking:         S_hat = sigmoid(raw) * Y   (bounded multiplicative mask)
//   kMapSpeech:       S_hat = raw                (direct regression)
//   kMapReverseNoise: S_hat = raw + Y            (the network regresses -N)
enum class HeadMode { kMasking, kMapSpeech, kMapReverseNoise };

std::string head_mode_name(HeadMode mode);
HeadMode head_mode_from_name(const std::string& name);

struct ModelConfig {
  int64_t base_channels = 16;
  std::array<int64_t, 4> encoder_depths{1, 1, 8, 4};
  int64_t bottleneck_depth = 6;
  std::array<int64_t, 4> decoder_depths{1, 1, 1, 1};
  HeadMode head = HeadMode::kMapReverseNoise;

  void validate() const {
    if (base_channels < 1) throw ConfigError("model: base_channels must be >= 1");
    if (bottleneck_depth < 1) throw ConfigError("model: bottleneck_depth must be >= 1");
    for (int64_t d : encoder_depths) {
      if (d < 1) throw ConfigError("model: encoder depths must be >= 1");
    }
    for (int64_t d : decoder_depths) {
      if (d < 1) throw ConfigError("model: decoder depths must be >= 1");
    }
  }

  bool operator==(const ModelConfig& o) const {
    return base_channels == o.base_channels && encoder_depths == o.encoder_depths &&
           bottleneck_depth == o.bottleneck_depth && decoder_depths == o.decoder_depths &&
           head == o.head;
  }
};

template <typename T>
struct ParamRef {
  std::string name;
  TensorT<T>* tensor;
};

namespace detail {

template <typename T>
void init_conv_uniform(Conv2d<T>& conv, Rng& rng) {
  const int64_t fan_in = (conv.in_channels / conv.groups) * conv.kh * conv.kw;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& w : conv.weight.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  // biases start at zero
}

}  // namespace detail

// One block of the network: a gated depthwise-conv branch with channel
// attention, then a gated pointwise branch, each added back residually.
// Channel count is preserved; there is no activation beyond the two gates.
template <typename T>
struct Glfb {
  TensorT<T> norm1_gain, norm1_bias;
  Conv2d<T> pc1;  // 1x1, C -> 2C
  Conv2d<T> dw;   // 3x3 depthwise over 2C
  Conv2d<T> sca;  // 1x1 on pooled stats, C -> C
  Conv2d<T> pc2;  // 1x1, C -> C
  TensorT<T> norm2_gain, norm2_bias;
  Conv2d<T> pc3;  // 1x1, C -> 2C
  Conv2d<T> pc4;  // 1x1, C -> C

  Glfb() = default;

  Glfb(int64_t channels, Rng& rng) {
    norm1_gain = TensorT<T>::filled({channels}, T(1), true);
    norm1_bias = TensorT<T>::zeros({channels}, true);
    norm2_gain = TensorT<T>::filled({channels}, T(1), true);
    norm2_bias = TensorT<T>::zeros({channels}, true);
    pc1 = make_conv2d<T>(channels, 2 * channels, 1, 1);
    dw = make_conv2d<T>(2 * channels, 2 * channels, 3, 3, 1, 1, 1, 1, 2 * channels);
    sca = make_conv2d<T>(channels, channels, 1, 1);
    pc2 = make_conv2d<T>(channels, channels, 1, 1);
    pc3 = make_conv2d<T>(channels, 2 * channels, 1, 1);
    pc4 = make_conv2d<T>(channels, channels, 1, 1);
    detail::init_conv_uniform(pc1, rng);
    detail::init_conv_uniform(dw, rng);
    detail::init_conv_uniform(sca, rng);
    detail::init_conv_uniform(pc2, rng);
    detail::init_conv_uniform(pc3, rng);
    detail::init_conv_uniform(pc4, rng);
  }

  int64_t channels() const { return pc1.in_channels; }

  TensorT<T> forward(const TensorT<T>& x) const {
    auto h = layer_norm_channel(x, norm1_gain, norm1_bias);
    h = conv2d(h, pc1);
    h = conv2d(h, dw);
    h = simple_gate(h);
    h = channel_attention(h, sca);
    h = conv2d(h, pc2);
    auto y1 = add(x, h);

    auto g = layer_norm_channel(y1, norm2_gain, norm2_bias);
    g = conv2d(g, pc3);
    g = simple_gate(g);
    g = conv2d(g, pc4);
    return add(y1, g);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".norm1.gain", norm1_gain);
    fn(prefix + ".norm1.bias", norm1_bias);
    fn(prefix + ".pc1.weight", pc1.weight);
    fn(prefix + ".pc1.bias", pc1.bias);
    fn(prefix + ".dw.weight", dw.weight);
    fn(prefix + ".dw.bias", dw.bias);
    fn(prefix + ".sca.weight", sca.weight);
    fn(prefix + ".sca.bias", sca.bias);
    fn(prefix + ".pc2.weight", pc2.weight);
    fn(prefix + ".pc2.bias", pc2.bias);
    fn(prefix + ".norm2.gain", norm2_gain);
    fn(prefix + ".norm2.bias", norm2_bias);
    fn(prefix + ".pc3.weight", pc3.weight);
    fn(prefix + ".pc3.bias", pc3.bias);
    fn(prefix + ".pc4.weight", pc4.weight);
    fn(prefix + ".pc4.bias", pc4.bias);
  }
};

// UNet over [B, 1, T, F] maps: four encoder stages that double channels and
// halve both axes, a bottleneck, and four decoder stages that mirror them with
// sum skip connections. T is zero-padded to a multiple of 16 and cropped back;
// F must already be divisible by 16.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg, uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(splitmix64(seed) ^ 0x6d666e6574ull);  // decouple from data seeds

    const int64_t n = cfg_.base_channels;
    input_proj_ = make_conv2d<T>(1, n, 3, 3, 1, 1, 1, 1);
    detail::init_conv_uniform(input_proj_, rng);

    int64_t c = n;
    for (int stage = 0; stage < 4; ++stage) {
      EncoderStage enc;
      for (int64_t i = 0; i < cfg_.encoder_depths[static_cast<size_t>(stage)]; ++i) {
        enc.blocks.emplace_back(c, rng);
      }
      enc.down = make_conv2d<T>(c, 2 * c, 2, 2, 2, 2);
      detail::init_conv_uniform(enc.down, rng);
      encoder_.push_back(std::move(enc));
      c *= 2;
    }

    for (int64_t i = 0; i < cfg_.bottleneck_depth; ++i) bottleneck_.emplace_back(c, rng);

    for (int stage = 0; stage < 4; ++stage) {
      DecoderStage dec;
      // 1x1 conv doubles channels, pixel shuffle trades 4x channels for a
      // 2x2 upsampling, so the stage comes out at half the input channels.
      dec.up = make_conv2d<T>(c, 2 * c, 1, 1);
      detail::init_conv_uniform(dec.up, rng);
      c /= 2;
      for (int64_t i = 0; i < cfg_.decoder_depths[static_cast<size_t>(stage)]; ++i) {
        dec.blocks.emplace_back(c, rng);
      }
      decoder_.push_back(std::move(dec));
    }

    // Zero output projection: at initialization the residual heads start as
    // the identity (or, for masking, a flat 0.5 mask).
    output_proj_ = make_conv2d<T>(n, 1, 3, 3, 1, 1, 1, 1);
  }

  const ModelConfig& config() const { return cfg_; }

  TensorT<T> forward(const TensorT<T>& noisy) const {
    if (noisy.rank() != 4 || noisy.dim(0) != 1 || noisy.dim(1) != 1) {
      throw ShapeError("model: input must be [1,1,T,F], got " + shape_str(noisy.shape()));
    }
    const int64_t t = noisy.dim(2), f = noisy.dim(3);
    if (t <= 0 || f <= 0 || f % 16 != 0) {
      throw ShapeError("model: input " + shape_str(noisy.shape()) +
                       " needs positive T and F divisible by 16");
    }
    const int64_t padded_t = (t + 15) / 16 * 16;

    auto x = pad_time(noisy, padded_t);
    x = conv2d(x, input_proj_);

    std::vector<TensorT<T>> skips;
    skips.reserve(4);
    for (const auto& stage : encoder_) {
      for (const auto& block : stage.blocks) x = block.forward(x);
      skips.push_back(x);
      x = conv2d(x, stage.down);
    }

    for (const auto& block : bottleneck_) x = block.forward(x);

    for (size_t stage = 0; stage < decoder_.size(); ++stage) {
      x = conv2d(x, decoder_[stage].up);
      x = pixel_shuffle(x, 2);
      x = add(x, skips[skips.size() - 1 - stage]);
      for (const auto& block : decoder_[stage].blocks) x = block.forward(x);
    }

    x = conv2d(x, output_proj_);
    x = crop_time(x, t);

    switch (cfg_.head) {
      case HeadMode::kMasking:
        return mul(sigmoid(x), noisy);
      case HeadMode::kMapSpeech:
        return x;
      case HeadMode::kMapReverseNoise:
      default:
        return add(x, noisy);
    }
  }

  // Channel count seen by the blocks of each stage, encoder to decoder:
  // [n, 2n, 4n, 8n, 16n, 8n, 4n, 2n, n] for the default depth-4 layout.
  std::vector<int64_t> channel_trace() const {
    std::vector<int64_t> trace;
    for (const auto& stage : encoder_) trace.push_back(stage.down.in_channels);
    trace.push_back(bottleneck_.front().channels());
    for (const auto& stage : decoder_) trace.push_back(stage.up.in_channels / 2);
    return trace;
  }

  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    visit_params([&out](const std::string& name, TensorT<T>& t) {
      out.push_back(ParamRef<T>{name, &t});
    });
    return out;
  }

  template <typename Fn>
  void visit_params(Fn&& fn) {
    fn("input_proj.weight", input_proj_.weight);
    fn("input_proj.bias", input_proj_.bias);
    for (size_t s = 0; s < encoder_.size(); ++s) {
      const std::string p = "enc" + std::to_string(s);
      for (size_t i = 0; i < encoder_[s].blocks.size(); ++i) {
        encoder_[s].blocks[i].visit(p + ".block" + std::to_string(i), fn);
      }
      fn(p + ".down.weight", encoder_[s].down.weight);
      fn(p + ".down.bias", encoder_[s].down.bias);
    }
    for (size_t i = 0; i < bottleneck_.size(); ++i) {
      bottleneck_[i].visit("mid.block" + std::to_string(i), fn);
    }
    for (size_t s = 0; s < decoder_.size(); ++s) {
      const std::string p = "dec" + std::to_string(s);
      fn(p + ".up.weight", decoder_[s].up.weight);
      fn(p + ".up.bias", decoder_[s].up.bias);
      for (size_t i = 0; i < decoder_[s].blocks.size(); ++i) {
        decoder_[s].blocks[i].visit(p + ".block" + std::to_string(i), fn);
      }
    }
    fn("output_proj.weight", output_proj_.weight);
    fn("output_proj.bias", output_proj_.bias);
  }

 private:
  struct EncoderStage {
    std::vector<Glfb<T>> blocks;
    Conv2d<T> down;
  };
  struct DecoderStage {
    Conv2d<T> up;
    std::vector<Glfb<T>> blocks;
  };

  ModelConfig cfg_;
  Conv2d<T> input_proj_;
  std::vector<EncoderStage> encoder_;
  std::vector<Glfb<T>> bottleneck_;
  std::vector<DecoderStage> decoder_;
  Conv2d<T> output_proj_;
};

struct ModelCosts {
  int64_t params = 0;
  double macs_per_second = 0.0;
};

// Parameter count and multiply-accumulates per second of audio for a config,
// at `frames_per_second` STDCT frames over `bins` frequency bins. Only
// convolution MACs are counted; element-wise work is excluded.
ModelCosts count_params_and_macs(const ModelConfig& cfg, double frames_per_second = 100.0,
                                 int64_t bins = 320);

// Bridges between the DSP spectrogram layout and [1, 1, frames, bins] tensors.
Tensor tensor_from_spectrogram(const Spectrogram& spec);
Spectrogram spectrogram_from_tensor(const Tensor& x, const FrameSpec& spec, int sample_rate);

// Runs the model on one noisy spectrogram without recording gradients.
Spectrogram enhance_spectrogram(const Spectrogram& noisy, const Model<float>& model);

}  // namespace mfnet
