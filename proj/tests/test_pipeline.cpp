#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "mfnet/pipeline.hpp"
#include "mfnet/wav.hpp"

using namespace mfnet;
namespace fs = std::filesystem;

namespace {

Waveform sine_wave(int64_t samples, double freq_hz, double amp = 0.5) {
  Waveform w;
  w.samples.resize(static_cast<size_t>(samples));
  for (int64_t i = 0; i < samples; ++i) {
    w.samples[static_cast<size_t>(i)] =
        amp * std::sin(2.0 * 3.14159265358979323846 * freq_hz * static_cast<double>(i) / 16000.0);
  }
  return w;
}

Waveform noise_wave(int64_t samples, uint64_t seed, double amp = 0.1) {
  Waveform w;
  w.samples.resize(static_cast<size_t>(samples));
  Rng rng(seed);
  for (auto& s : w.samples) s = amp * rng.normal();
  return w;
}

double achieved_snr_db(const Waveform& clean, const Waveform& noisy) {
  double ce = 0.0, ne = 0.0;
  for (size_t i = 0; i < clean.samples.size(); ++i) {
    ce += clean.samples[i] * clean.samples[i];
    const double n = noisy.samples[i] - clean.samples[i];
    ne += n * n;
  }
  return 10.0 * std::log10(ce / ne);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.encoder_depths = {1, 1, 1, 1};
  cfg.bottleneck_depth = 1;
  cfg.decoder_depths = {1, 1, 1, 1};
  return cfg;
}

TrainConfig quick_train_config() {
  TrainConfig cfg;
  cfg.lr_max = 1e-3;
  cfg.warmup_epochs = 1;
  cfg.total_epochs = 2;
  cfg.segment_seconds = 0.1;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& stem) : path(fs::path("tmp_" + stem)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("train config validation separates config and argument errors") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.total_epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.warmup_epochs = 60;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.beta2 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("mixing hits the requested snr to well under a millibel") {
  const Waveform clean = sine_wave(16000, 440.0);
  const Waveform noise = noise_wave(48000, 7);
  for (double target : {-9.0, -3.0, 0.0, 9.0, 15.0}) {
    auto [aligned, noisy] = mix_at_snr(clean, noise, target, 3);
    REQUIRE(noisy.samples.size() == clean.samples.size());
    CHECK(std::abs(achieved_snr_db(aligned, noisy) - target) < 1e-6);
  }
}

TEST_CASE("a zero dB mix carries equal clean and noise energy") {
  const Waveform clean = sine_wave(8000, 220.0);
  const Waveform noise = noise_wave(8000, 11);
  auto [aligned, noisy] = mix_at_snr(clean, noise, 0.0, 5);
  double ce = 0.0, ne = 0.0;
  for (size_t i = 0; i < aligned.samples.size(); ++i) {
    ce += aligned.samples[i] * aligned.samples[i];
    const double n = noisy.samples[i] - aligned.samples[i];
    ne += n * n;
  }
  CHECK(ce == doctest::Approx(ne).epsilon(1e-9));
}

TEST_CASE("mixing is seed deterministic and seed sensitive") {
  const Waveform clean = sine_wave(4000, 330.0);
  const Waveform noise = noise_wave(20000, 13);
  auto [a1, n1] = mix_at_snr(clean, noise, 3.0, 42);
  auto [a2, n2] = mix_at_snr(clean, noise, 3.0, 42);
  CHECK(n1.samples == n2.samples);
  CHECK(a1.samples == a2.samples);

  bool any_difference = false;
  for (uint64_t seed = 0; seed < 8 && !any_difference; ++seed) {
    auto [a3, n3] = mix_at_snr(clean, noise, 3.0, seed);
    any_difference = n3.samples != n1.samples;
  }
  CHECK(any_difference);
}

TEST_CASE("short noise is looped to cover the clean signal") {
  const Waveform clean = sine_wave(6400, 500.0);
  const Waveform noise = noise_wave(777, 17);
  auto [aligned, noisy] = mix_at_snr(clean, noise, 5.0, 9);
  CHECK(std::abs(achieved_snr_db(aligned, noisy) - 5.0) < 1e-6);
}

TEST_CASE("hot mixtures are scaled back to a 0.99 peak") {
  const Waveform clean = sine_wave(4000, 250.0, 0.95);
  const Waveform noise = noise_wave(4000, 19, 0.5);
  auto [aligned, noisy] = mix_at_snr(clean, noise, -6.0, 21);
  double peak = 0.0;
  for (double s : noisy.samples) peak = std::max(peak, std::abs(s));
  CHECK(peak == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(std::abs(achieved_snr_db(aligned, noisy) - (-6.0)) < 1e-6);
}

TEST_CASE("mixing rejects degenerate inputs") {
  const Waveform clean = sine_wave(1000, 100.0);
  Waveform silent;
  silent.samples.assign(1000, 0.0);
  CHECK_THROWS_AS(mix_at_snr(clean, silent, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mix_at_snr(silent, clean, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mix_at_snr(Waveform{}, clean, 0.0, 0), std::invalid_argument);
  Waveform wrong_rate = clean;
  wrong_rate.sample_rate = 8000;
  CHECK_THROWS_AS(mix_at_snr(clean, wrong_rate, 0.0, 0), std::invalid_argument);
}

TEST_CASE("the learning rate warms up linearly and decays to one percent") {
  TrainConfig cfg;
  cfg.lr_max = 0.0034;
  cfg.warmup_epochs = 5;
  cfg.total_epochs = 50;
  const int64_t spe = 10;
  const int64_t warmup = cfg.warmup_epochs * spe;
  const int64_t total = cfg.total_epochs * spe;

  CHECK(lr_schedule(0, spe, cfg) == 0.0);
  CHECK(lr_schedule(warmup / 2, spe, cfg) == doctest::Approx(cfg.lr_max / 2).epsilon(1e-12));
  CHECK(lr_schedule(warmup, spe, cfg) == doctest::Approx(cfg.lr_max).epsilon(1e-12));
  CHECK(lr_schedule(total, spe, cfg) == doctest::Approx(cfg.lr_max / 100.0).epsilon(1e-9));

  // No jump at the warmup boundary beyond one warmup increment.
  const double before = lr_schedule(warmup - 1, spe, cfg);
  const double at = lr_schedule(warmup, spe, cfg);
  CHECK(at - before < cfg.lr_max / static_cast<double>(warmup) + 1e-12);

  // Monotone up during warmup, monotone down after.
  for (int64_t s = 1; s <= warmup; ++s) {
    CHECK(lr_schedule(s, spe, cfg) >= lr_schedule(s - 1, spe, cfg));
  }
  for (int64_t s = warmup + 1; s <= total; ++s) {
    CHECK(lr_schedule(s, spe, cfg) <= lr_schedule(s - 1, spe, cfg));
  }

  CHECK_THROWS_AS(lr_schedule(-1, spe, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(0, 0, cfg), std::invalid_argument);
}

TEST_CASE("zero warmup starts at the peak rate") {
  TrainConfig cfg;
  cfg.lr_max = 0.01;
  cfg.warmup_epochs = 0;
  cfg.total_epochs = 10;
  CHECK(lr_schedule(0, 5, cfg) == doctest::Approx(0.01));
}

TEST_CASE("adamw takes a unit first step against a unit gradient") {
  auto w = Tensor::filled({4}, 1.0f, true);
  w.grad().assign(4, 1.0f);
  std::vector<ParamRef<float>> params{{"w", &w}};
  AdamWState state;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(params, state, 0.1, cfg);
  // Bias-corrected m_hat = v_hat = 1, so the step is lr to within eps.
  for (float v : w.values()) CHECK(v == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(state.t == 1);
}

TEST_CASE("with zero gradient adamw reduces to pure weight decay") {
  auto w = Tensor::filled({3}, 1.0f, true);
  w.grad().assign(3, 0.0f);
  std::vector<ParamRef<float>> params{{"w", &w}};
  AdamWState state;
  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  adamw_step(params, state, 0.1, cfg);
  for (float v : w.values()) CHECK(v == doctest::Approx(0.999).epsilon(1e-7));
}

TEST_CASE("adamw state is tied to its parameter list") {
  auto w = Tensor::filled({2}, 1.0f, true);
  std::vector<ParamRef<float>> params{{"w", &w}};
  AdamWState state;
  TrainConfig cfg;
  adamw_step(params, state, 0.1, cfg);
  auto u = Tensor::filled({2}, 1.0f, true);
  std::vector<ParamRef<float>> more{{"w", &w}, {"u", &u}};
  CHECK_THROWS_AS(adamw_step(more, state, 0.1, cfg), std::invalid_argument);
}

TEST_CASE("training on prepared pairs is bitwise deterministic") {
  const Waveform clean = sine_wave(4000, 440.0);
  const Waveform noise = noise_wave(16000, 23);
  auto [aligned, noisy] = mix_at_snr(clean, noise, 0.0, 1);
  std::vector<TrainPair> pairs{{aligned, noisy, "pair0"}};

  TrainConfig cfg = quick_train_config();
  auto run = [&](uint64_t seed) {
    TrainConfig c = cfg;
    c.seed = seed;
    Model<float> model(tiny_config(), seed);
    TrainResult res = train_on_pairs(pairs, c, model);
    std::vector<float> flat;
    for (const auto& p : model.parameters()) {
      flat.insert(flat.end(), p.tensor->values().begin(), p.tensor->values().end());
    }
    return std::make_pair(res, flat);
  };

  auto [r1, w1] = run(0);
  auto [r2, w2] = run(0);
  REQUIRE(r1.curve.size() == r2.curve.size());
  for (size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].loss == r2.curve[i].loss);
    CHECK(r1.curve[i].lr == r2.curve[i].lr);
  }
  CHECK(w1 == w2);

  auto [r3, w3] = run(1);
  CHECK(w3 != w1);
  CHECK(r1.steps == 2);
  CHECK(r1.epoch_mean_loss.size() == 2);
}

TEST_CASE("training validates its inputs") {
  Model<float> model(tiny_config());
  TrainConfig cfg = quick_train_config();
  CHECK_THROWS_AS(train_on_pairs({}, cfg, model), std::invalid_argument);
  Waveform a = sine_wave(1000, 100.0), b = sine_wave(999, 100.0);
  std::vector<TrainPair> bad{{a, b, "bad"}};
  CHECK_THROWS_AS(train_on_pairs(bad, cfg, model), std::invalid_argument);
}

TEST_CASE("manifest training writes a checkpoint and loss curve") {
  TempDir dir("train");
  const Waveform clean = sine_wave(8000, 330.0);
  const Waveform noise = noise_wave(12000, 29);
  write_wav(dir.file("clean.wav"), clean);
  write_wav(dir.file("noise.wav"), noise);

  std::vector<MixSpec> manifest{{dir.file("clean.wav"), dir.file("noise.wav"), 0.0, 4}};
  TrainConfig cfg = quick_train_config();
  const ModelConfig mc = tiny_config();
  TrainResult res = train(manifest, cfg, mc, dir.file("out"));

  CHECK(res.steps == 2);
  CHECK(fs::exists(dir.file("out") + "/checkpoint.mfn1"));
  CHECK(fs::exists(dir.file("out") + "/loss_curve.json"));
  Model<float> loaded = load_checkpoint(dir.file("out") + "/checkpoint.mfn1", mc);
  CHECK(loaded.config() == mc);

  std::ifstream curve(dir.file("out") + "/loss_curve.json");
  const std::string text((std::istreambuf_iterator<char>(curve)),
                         std::istreambuf_iterator<char>());
  CHECK(text.find("\"loss\"") != std::string::npos);
  CHECK(text.find("\"lr\"") != std::string::npos);
}

TEST_CASE("periodic checkpoints skip the final epoch") {
  TempDir dir("ckpts");
  const Waveform clean = sine_wave(4000, 330.0);
  const Waveform noise = noise_wave(6000, 31);
  write_wav(dir.file("clean.wav"), clean);
  write_wav(dir.file("noise.wav"), noise);

  std::vector<MixSpec> manifest{{dir.file("clean.wav"), dir.file("noise.wav"), 0.0, 4}};
  TrainConfig cfg = quick_train_config();
  cfg.total_epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.checkpoint_every_epochs = 1;
  train(manifest, cfg, tiny_config(), dir.file("out"));

  CHECK(fs::exists(dir.file("out") + "/checkpoint_epoch1.mfn1"));
  CHECK(fs::exists(dir.file("out") + "/checkpoint_epoch2.mfn1"));
  CHECK_FALSE(fs::exists(dir.file("out") + "/checkpoint_epoch3.mfn1"));
  CHECK(fs::exists(dir.file("out") + "/checkpoint.mfn1"));
}

TEST_CASE("a runaway learning rate aborts with the last good weights saved") {
  TempDir dir("abort");
  const Waveform clean = sine_wave(4000, 330.0);
  const Waveform noise = noise_wave(6000, 37);
  write_wav(dir.file("clean.wav"), clean);
  write_wav(dir.file("noise.wav"), noise);

  std::vector<MixSpec> manifest{{dir.file("clean.wav"), dir.file("noise.wav"), 0.0, 4}};
  TrainConfig cfg = quick_train_config();
  cfg.lr_max = 1e15;
  cfg.warmup_epochs = 0;
  cfg.total_epochs = 4;
  CHECK_THROWS_AS(train(manifest, cfg, tiny_config(), dir.file("out")), NumericError);
  CHECK_FALSE(fs::exists(dir.file("out") + "/checkpoint.mfn1"));
  CHECK(fs::exists(dir.file("out") + "/checkpoint_last_good.mfn1"));
  CHECK_NOTHROW(load_checkpoint(dir.file("out") + "/checkpoint_last_good.mfn1"));
}

TEST_CASE("manifests parse strictly and resolve relative paths") {
  TempDir dir("manifest");
  {
    std::ofstream out(dir.file("set.json"));
    out << R"([{"clean_path": "c.wav", "noise_path": "/abs/n.wav", "snr_db": 3.5}])";
  }
  auto specs = load_manifest(dir.file("set.json"));
  REQUIRE(specs.size() == 1);
  CHECK(specs[0].clean_path == (dir.path / "c.wav").string());
  CHECK(specs[0].noise_path == "/abs/n.wav");
  CHECK(specs[0].snr_db == 3.5);
  CHECK(specs[0].seed == 0);

  {
    std::ofstream out(dir.file("bad_key.json"));
    out << R"([{"clean_path": "c.wav", "noise_path": "n.wav", "snr_db": 0, "level": 1}])";
  }
  CHECK_THROWS_AS(load_manifest(dir.file("bad_key.json")), ConfigError);

  {
    std::ofstream out(dir.file("missing.json"));
    out << R"([{"clean_path": "c.wav", "snr_db": 0}])";
  }
  CHECK_THROWS_AS(load_manifest(dir.file("missing.json")), ConfigError);

  {
    std::ofstream out(dir.file("not_array.json"));
    out << R"({"clean_path": "c.wav"})";
  }
  CHECK_THROWS_AS(load_manifest(dir.file("not_array.json")), ConfigError);
  CHECK_THROWS_AS(load_manifest(dir.file("absent.json")), ConfigError);
}

TEST_CASE("enhancing with a fresh reverse-noise model reconstructs the input") {
  Model<float> model(tiny_config(), 3);
  for (int64_t len : {16000LL, 16050LL}) {
    const Waveform in = sine_wave(len, 440.0);
    EnhanceStats stats;
    const Waveform out = enhance(in, model, &stats);
    REQUIRE(out.size() == in.size());
    double err = 0.0;
    for (size_t i = 0; i < in.samples.size(); ++i) {
      const double d = in.samples[i] - out.samples[i];
      err += d * d;
    }
    CHECK(std::sqrt(err / static_cast<double>(len)) < 1e-6);
    CHECK(stats.frames == stdct_frame_count(len, FrameSpec::sqrt_hann()));
    CHECK(stats.clipped_samples == 0);
  }
}

TEST_CASE("enhance clips out-of-range output and counts it") {
  Model<float> model(tiny_config(), 3);
  Waveform loud = sine_wave(16000, 220.0, 1.5);
  EnhanceStats stats;
  const Waveform out = enhance(loud, model, &stats);
  CHECK(stats.clipped_samples > 0);
  for (double s : out.samples) CHECK(std::abs(s) <= 1.0);
}

TEST_CASE("enhance rejects non 16 kHz input") {
  Model<float> model(tiny_config(), 3);
  Waveform w = sine_wave(8000, 100.0);
  w.sample_rate = 44100;
  CHECK_THROWS_AS(enhance(w, model), FormatError);
}
