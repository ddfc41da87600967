#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mfnet/checkpoint.hpp"
#include "mfnet/model.hpp"
#include "mfnet/objectives.hpp"

namespace mfnet {

// One training mixture: a clean utterance, a noise recording, the target
// signal-to-noise ratio, and the seed that fixes the noise crop.
struct MixSpec {
  std::string clean_path;
  std::string noise_path;
  double snr_db = 0.0;
  uint64_t seed = 0;
};

struct TrainConfig {
  double lr_max = 0.0034;
  int64_t warmup_epochs = 5;
  int64_t total_epochs = 50;
  int64_t batch_size = 1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double gamma = 0.5;
  uint64_t seed = 0;
  double segment_seconds = 2.0;
  int64_t checkpoint_every_epochs = 0;  // 0 = final checkpoint only

  void validate() const;
};

// Scales noise so that 10 log10(||clean||^2 / ||alpha * noise||^2) hits
// `snr_db` exactly, using a seed-derived crop (or loop) of the noise, then
// peak-normalizes the mixture to 0.99 with the same factor applied to the
// clean signal. Returns {clean_aligned, noisy}.
std::pair<Waveform, Waveform> mix_at_snr(const Waveform& clean, const Waveform& noise,
                                         double snr_db, uint64_t seed);

// Linear warmup from 0 to lr_max over the warmup epochs, then a cosine decay
// to lr_max / 100 at the final step.
double lr_schedule(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg);

// Decoupled-weight-decay Adam state. Moments are stored per parameter in the
// order Model::parameters() reports.
struct AdamWState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  int64_t t = 0;
};

void adamw_step(std::vector<ParamRef<float>>& params, AdamWState& state, double lr,
                const TrainConfig& cfg);

struct TrainPair {
  Waveform clean;
  Waveform noisy;
  std::string id;
};

struct LossCurvePoint {
  int64_t epoch = 0;
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossCurvePoint> curve;
  std::vector<double> epoch_mean_loss;
  int64_t steps = 0;
};

// Runs the deterministic training loop on prepared pairs, updating `model`
// in place. Aborts with NumericError when the loss goes non-finite.
TrainResult train_on_pairs(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                           Model<float>& model);

// Full training entry point: loads and mixes the manifest, trains a fresh
// model, writes `checkpoint.mfn1` and `loss_curve.json` under out_dir (plus
// periodic epoch checkpoints when configured). On a numeric abort the last
// good weights are saved as `checkpoint_last_good.mfn1` before the error is
// rethrown.
TrainResult train(const std::vector<MixSpec>& manifest, const TrainConfig& cfg,
                  const ModelConfig& model_cfg, const std::string& out_dir,
                  Model<float>** out_model = nullptr);

// Parses a JSON array of {clean_path, noise_path, snr_db, seed} records.
// Relative paths are resolved against the manifest's directory.
std::vector<MixSpec> load_manifest(const std::string& path);

struct EnhanceStats {
  int64_t frames = 0;
  int64_t clipped_samples = 0;
};

// Enhances one waveform: STDCT, model, inverse STDCT, clip to [-1, 1].
Waveform enhance(const Waveform& noisy, const Model<float>& model,
                 EnhanceStats* stats = nullptr);

}  // namespace mfnet
