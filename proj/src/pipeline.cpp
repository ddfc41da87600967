#include "mfnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "mfnet/wav.hpp"

namespace mfnet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (lr_max < 0.0) throw ConfigError("train: lr_max must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("train: warmup_epochs must be >= 0");
  if (total_epochs < 1) throw ConfigError("train: total_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (warmup_epochs > total_epochs) {
    throw ConfigError("train: warmup_epochs exceeds total_epochs");
  }
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (eps <= 0.0) throw ConfigError("train: eps must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("train: gamma must be in [0,1], got " + std::to_string(gamma));
  }
  if (segment_seconds <= 0.0) throw ConfigError("train: segment_seconds must be > 0");
  if (checkpoint_every_epochs < 0) {
    throw ConfigError("train: checkpoint_every_epochs must be >= 0");
  }
}

std::pair<Waveform, Waveform> mix_at_snr(const Waveform& clean, const Waveform& noise,
                                         double snr_db, uint64_t seed) {
  if (clean.samples.empty() || noise.samples.empty()) {
    throw std::invalid_argument("mix_at_snr: empty input signal");
  }
  if (clean.sample_rate != noise.sample_rate) {
    throw std::invalid_argument("mix_at_snr: sample rates differ (" +
                                std::to_string(clean.sample_rate) + " vs " +
                                std::to_string(noise.sample_rate) + ")");
  }

  const int64_t len = clean.size();
  const int64_t noise_len = noise.size();

  // Seed-derived noise crop; shorter noise is looped from the offset.
  Rng rng(seed);
  const int64_t offset = rng.uniform_int(noise_len >= len ? noise_len - len + 1 : noise_len);
  std::vector<double> cut(static_cast<size_t>(len));
  for (int64_t i = 0; i < len; ++i) {
    cut[static_cast<size_t>(i)] = noise.samples[static_cast<size_t>((offset + i) % noise_len)];
  }

  double clean_energy = 0.0;
  for (double s : clean.samples) clean_energy += s * s;
  double noise_energy = 0.0;
  for (double s : cut) noise_energy += s * s;
  if (clean_energy == 0.0 || noise_energy == 0.0) {
    throw std::invalid_argument("mix_at_snr: silent clean or noise segment");
  }

  // alpha makes 10 log10(clean_energy / (alpha^2 noise_energy)) == snr_db.
  const double alpha = std::sqrt(clean_energy / (noise_energy * std::pow(10.0, snr_db / 10.0)));

  Waveform aligned_clean;
  aligned_clean.sample_rate = clean.sample_rate;
  aligned_clean.samples = clean.samples;
  Waveform noisy;
  noisy.sample_rate = clean.sample_rate;
  noisy.samples.resize(static_cast<size_t>(len));
  double peak = 0.0;
  for (int64_t i = 0; i < len; ++i) {
    const double v =
        clean.samples[static_cast<size_t>(i)] + alpha * cut[static_cast<size_t>(i)];
    noisy.samples[static_cast<size_t>(i)] = v;
    peak = std::max(peak, std::abs(v));
  }

  // Keep the mixture inside [-0.99, 0.99]; the same gain is applied to the
  // clean reference so the pair stays aligned and the SNR is unchanged.
  if (peak > 0.99) {
    const double g = 0.99 / peak;
    for (auto& s : noisy.samples) s *= g;
    for (auto& s : aligned_clean.samples) s *= g;
  }
  return {std::move(aligned_clean), std::move(noisy)};
}

double lr_schedule(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg) {
  if (step < 0 || steps_per_epoch < 1) {
    throw std::invalid_argument("lr_schedule: need step >= 0 and steps_per_epoch >= 1");
  }
  const int64_t warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  const int64_t total_steps = cfg.total_epochs * steps_per_epoch;
  const double lr_min = cfg.lr_max / 100.0;

  if (step < warmup_steps) {
    return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const int64_t decay_steps = total_steps - warmup_steps;
  if (decay_steps <= 0) return cfg.lr_max;
  const double t = std::min(1.0, static_cast<double>(step - warmup_steps) /
                                     static_cast<double>(decay_steps));
  return lr_min + 0.5 * (cfg.lr_max - lr_min) * (1.0 + std::cos(t * 3.14159265358979323846));
}

void adamw_step(std::vector<ParamRef<float>>& params, AdamWState& state, double lr,
                const TrainConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor->values().size(), 0.0f);
      state.v[i].assign(params[i].tensor->values().size(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw_step: state was built for a different parameter list");
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  for (size_t i = 0; i < params.size(); ++i) {
    auto& values = params[i].tensor->values();
    auto& grads = params[i].tensor->grad();  // zeros when the tensor saw no backward pass
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t k = 0; k < values.size(); ++k) {
      const double g = grads[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double m_hat = mk / bc1;
      const double v_hat = vk / bc2;
      // Decoupled weight decay: applied to the weights directly, not mixed
      // into the gradient moments.
      const double w = values[k];
      values[k] = static_cast<float>(
          w - lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w));
    }
  }
}

namespace {

// Deterministic per-step segment crop. Uses its own stream so changes to
// model init cannot shift data selection.
struct SegmentSampler {
  Rng rng;
  int64_t segment_len;

  SegmentSampler(uint64_t seed, int64_t segment_len_in)
      : rng(splitmix64(seed) ^ 0x736567ull), segment_len(segment_len_in) {}

  std::pair<int64_t, int64_t> range(int64_t total_len) {
    if (total_len <= segment_len) return {0, total_len};
    const int64_t start = rng.uniform_int(total_len - segment_len + 1);
    return {start, segment_len};
  }
};

Tensor spectrum_tensor(const Waveform& wave, int64_t start, int64_t len) {
  Waveform segment;
  segment.sample_rate = wave.sample_rate;
  segment.samples.assign(wave.samples.begin() + start, wave.samples.begin() + start + len);
  return tensor_from_spectrogram(stdct(segment));
}

void write_loss_curve(const std::string& path, const std::vector<LossCurvePoint>& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : curve) {
    arr.push_back({{"epoch", p.epoch}, {"step", p.step}, {"lr", p.lr}, {"loss", p.loss}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write loss curve: " + path);
  out << arr.dump(1) << "\n";
}

using EpochHook = std::function<void(int64_t epoch, Model<float>& model)>;

TrainResult run_train_loop(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                           Model<float>& model, const EpochHook& on_epoch_end) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
  for (const auto& p : pairs) {
    if (p.clean.samples.size() != p.noisy.samples.size()) {
      throw std::invalid_argument("train: pair '" + p.id + "' has mismatched lengths");
    }
    if (p.clean.samples.empty()) {
      throw std::invalid_argument("train: pair '" + p.id + "' is empty");
    }
  }

  std::vector<ParamRef<float>> params = model.parameters();
  AdamWState state;
  SegmentSampler sampler(
      cfg.seed, static_cast<int64_t>(cfg.segment_seconds * pairs[0].clean.sample_rate));
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(pairs.size()) + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result;
  int64_t global_step = 0;
  for (int64_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    double epoch_loss = 0.0;
    int64_t epoch_steps = 0;
    for (size_t i = 0; i < pairs.size(); i += static_cast<size_t>(cfg.batch_size)) {
      // A batch accumulates gradients over up to batch_size utterances and
      // applies one averaged update.
      for (auto& p : params) p.tensor->zero_grad();
      const size_t batch_end = std::min(pairs.size(), i + static_cast<size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(batch_end - i);
      const double lr = lr_schedule(global_step, steps_per_epoch, cfg);
      double batch_loss = 0.0;
      for (size_t b = i; b < batch_end; ++b) {
        const TrainPair& pair = pairs[b];
        const auto [start, len] = sampler.range(pair.clean.size());
        const Tensor noisy = spectrum_tensor(pair.noisy, start, len);
        const Tensor target = spectrum_tensor(pair.clean, start, len);
        const Tensor pred = model.forward(noisy);
        Tensor loss = scale(loss_mfnet(target, pred, cfg.gamma), inv_batch);
        const double loss_value = static_cast<double>(loss.item()) / inv_batch;
        if (!std::isfinite(loss_value)) {
          throw NumericError("train: non-finite loss at step " + std::to_string(global_step) +
                             ", lr " + std::to_string(lr) + ", epoch " + std::to_string(epoch) +
                             ", pair '" + pair.id + "'");
        }
        loss.backward();
        batch_loss += loss_value * inv_batch;
      }
      adamw_step(params, state, lr, cfg);
      result.curve.push_back({epoch, global_step, lr, batch_loss});
      epoch_loss += batch_loss;
      epoch_steps += 1;
      global_step += 1;
    }
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_steps));
    if (on_epoch_end) on_epoch_end(epoch, model);
  }
  result.steps = global_step;
  return result;
}

}  // namespace

TrainResult train_on_pairs(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                           Model<float>& model) {
  return run_train_loop(pairs, cfg, model, EpochHook());
}

TrainResult train(const std::vector<MixSpec>& manifest, const TrainConfig& cfg,
                  const ModelConfig& model_cfg, const std::string& out_dir,
                  Model<float>** out_model) {
  cfg.validate();
  model_cfg.validate();
  if (manifest.empty()) throw std::invalid_argument("train: empty manifest");

  fs::create_directories(out_dir);

  std::vector<TrainPair> pairs;
  pairs.reserve(manifest.size());
  for (const auto& mix : manifest) {
    const Waveform clean = read_wav(mix.clean_path);
    const Waveform noise = read_wav(mix.noise_path);
    auto [aligned, noisy] = mix_at_snr(clean, noise, mix.snr_db, mix.seed);
    pairs.push_back(TrainPair{std::move(aligned), std::move(noisy),
                              fs::path(mix.clean_path).filename().string()});
  }

  auto model = std::make_unique<Model<float>>(model_cfg, cfg.seed);
  const std::string final_path = (fs::path(out_dir) / "checkpoint.mfn1").string();
  const std::string curve_path = (fs::path(out_dir) / "loss_curve.json").string();

  EpochHook hook;
  if (cfg.checkpoint_every_epochs > 0) {
    hook = [&cfg, &out_dir](int64_t epoch, Model<float>& m) {
      if ((epoch + 1) % cfg.checkpoint_every_epochs == 0 && epoch + 1 < cfg.total_epochs) {
        save_checkpoint(
            m, (fs::path(out_dir) / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".mfn1"))
                   .string());
      }
    };
  }

  TrainResult result;
  try {
    result = run_train_loop(pairs, cfg, *model, hook);
  } catch (const NumericError&) {
    // The loss check runs before the optimizer step, so the current weights
    // were produced by the last finite update. Keep them for inspection.
    bool finite = true;
    for (auto& p : model->parameters()) {
      for (float v : p.tensor->values()) {
        if (!std::isfinite(v)) {
          finite = false;
          break;
        }
      }
      if (!finite) break;
    }
    if (finite) {
      save_checkpoint(*model, (fs::path(out_dir) / "checkpoint_last_good.mfn1").string());
    }
    throw;
  }

  save_checkpoint(*model, final_path);
  write_loss_curve(curve_path, result.curve);
  if (out_model != nullptr) *out_model = model.release();
  return result;
}

std::vector<MixSpec> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw ConfigError("manifest " + path + ": expected a JSON array");

  const fs::path base = fs::path(path).parent_path();
  std::vector<MixSpec> specs;
  specs.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_object()) throw ConfigError("manifest " + path + ": entries must be objects");
    for (auto it = item.begin(); it != item.end(); ++it) {
      const std::string& k = it.key();
      if (k != "clean_path" && k != "noise_path" && k != "snr_db" && k != "seed") {
        throw ConfigError("manifest " + path + ": unknown key '" + k + "'");
      }
    }
    MixSpec spec;
    try {
      spec.clean_path = item.at("clean_path").get<std::string>();
      spec.noise_path = item.at("noise_path").get<std::string>();
      spec.snr_db = item.at("snr_db").get<double>();
      spec.seed = item.value("seed", uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest " + path + ": " + e.what());
    }
    auto resolve = [&base](const std::string& p) {
      fs::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    spec.clean_path = resolve(spec.clean_path);
    spec.noise_path = resolve(spec.noise_path);
    specs.push_back(std::move(spec));
  }
  return specs;
}

Waveform enhance(const Waveform& noisy, const Model<float>& model, EnhanceStats* stats) {
  if (noisy.sample_rate != 16000) {
    throw FormatError("enhance: expected 16 kHz input, got " +
                      std::to_string(noisy.sample_rate) + " Hz");
  }

  const Spectrogram noisy_spec = stdct(noisy);
  const Spectrogram enhanced = enhance_spectrogram(noisy_spec, model);
  Waveform out = istdct(enhanced, noisy.size());

  int64_t clipped = 0;
  for (auto& s : out.samples) {
    if (s > 1.0) {
      s = 1.0;
      ++clipped;
    } else if (s < -1.0) {
      s = -1.0;
      ++clipped;
    }
  }
  if (stats != nullptr) {
    stats->frames = noisy_spec.frames;
    stats->clipped_samples = clipped;
  }
  return out;
}

}  // namespace mfnet
