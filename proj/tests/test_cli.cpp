#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "mfnet/checkpoint.hpp"
#include "mfnet/pipeline.hpp"
#include "mfnet/wav.hpp"

using namespace mfnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string stdout_text;
};

CliResult run_cli(const std::string& args) {
  const std::string out_file = "cli_stdout.txt";
  const std::string cmd =
      std::string(MFNET_CLI_PATH) + " " + args + " > " + out_file + " 2> cli_stderr.txt";
  const int raw = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  result.stdout_text.assign(std::istreambuf_iterator<char>(in),
                            std::istreambuf_iterator<char>());
  return result;
}

json parse_stdout(const CliResult& r) {
  REQUIRE_FALSE(r.stdout_text.empty());
  return json::parse(r.stdout_text);
}

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

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.encoder_depths = {1, 1, 1, 1};
  cfg.bottleneck_depth = 1;
  cfg.decoder_depths = {1, 1, 1, 1};
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& stem) : path(fs::path("tmp_cli_" + stem)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_stereo_pcm16(const std::string& path) {
  // Hand-built two-channel PCM16 header the strict reader must reject.
  const uint32_t n_frames = 4;
  const uint16_t channels = 2, bits = 16;
  const uint32_t rate = 16000;
  const uint32_t byte_rate = rate * channels * bits / 8;
  const uint16_t block_align = channels * bits / 8;
  const uint32_t data_size = n_frames * block_align;
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&out](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&out](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(channels);
  u32(rate);
  u32(byte_rate);
  u16(block_align);
  u16(bits);
  out.write("data", 4);
  u32(data_size);
  for (uint32_t i = 0; i < n_frames * channels; ++i) u16(0);
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

std::string train_config_text(const std::string& out_dir) {
  json doc{{"manifest", "manifest.json"},
           {"out_dir", out_dir},
           {"model",
            {{"base_channels", 2},
             {"encoder_depths", {1, 1, 1, 1}},
             {"bottleneck_depth", 1},
             {"decoder_depths", {1, 1, 1, 1}}}},
           {"train",
            {{"lr_max", 0.001},
             {"warmup_epochs", 1},
             {"total_epochs", 2},
             {"segment_seconds", 0.1}}}};
  return doc.dump(2);
}

void write_train_fixture(const TempDir& dir) {
  write_wav(dir.file("clean.wav"), sine_wave(8000, 330.0));
  write_wav(dir.file("noise.wav"), noise_wave(12000, 7));
  std::ofstream manifest(dir.file("manifest.json"));
  manifest << json::array({{{"clean_path", "clean.wav"},
                            {"noise_path", "noise.wav"},
                            {"snr_db", 0.0},
                            {"seed", 4}}})
                  .dump(2);
}

}  // namespace

TEST_CASE("cli rejects missing or unknown subcommands") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("polish --shine high").exit_code == 2);
  CHECK(run_cli("evaluate --ref only_one.wav").exit_code == 2);
}

TEST_CASE("cli evaluate reports capped metrics for identical files") {
  TempDir dir("eval");
  write_wav(dir.file("ref.wav"), sine_wave(4000, 440.0));
  auto r = run_cli("evaluate --ref " + dir.file("ref.wav") + " --est " + dir.file("ref.wav"));
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("snr_db").get<double>() == 99.99);
  CHECK(doc.at("si_sdr_db").get<double>() == 99.99);
  CHECK(doc.at("samples").get<int64_t>() == 4000);
}

TEST_CASE("cli evaluate distinguishes a noisier estimate") {
  TempDir dir("eval2");
  const Waveform clean = sine_wave(8000, 220.0);
  const Waveform noise = noise_wave(16000, 3);
  auto [aligned, noisy] = mix_at_snr(clean, noise, 5.0, 1);
  write_wav(dir.file("ref.wav"), aligned);
  write_wav(dir.file("est.wav"), noisy);
  auto r = run_cli("evaluate --ref " + dir.file("ref.wav") + " --est " + dir.file("est.wav"));
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("snr_db").get<double>() == doctest::Approx(5.0).epsilon(1e-4));
}

TEST_CASE("cli evaluate exits 2 on unreadable input") {
  CHECK(run_cli("evaluate --ref nope.wav --est nope.wav").exit_code == 2);
}

TEST_CASE("cli enhance with a fresh reverse-noise checkpoint reconstructs the input") {
  TempDir dir("enhance");
  Model<float> model(tiny_config(), 5);
  save_checkpoint(model, dir.file("model.mfn1"));
  const Waveform in = sine_wave(16000, 440.0);
  write_wav(dir.file("in.wav"), in);

  auto r = run_cli("enhance --ckpt " + dir.file("model.mfn1") + " --in " + dir.file("in.wav") +
                   " --out " + dir.file("out.wav"));
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("samples").get<int64_t>() == 16000);
  CHECK(doc.at("frames").get<int64_t>() == 101);
  CHECK(doc.at("clipped_samples").get<int64_t>() == 0);
  CHECK(doc.at("rtf").get<double>() > 0.0);

  const Waveform out = read_wav(dir.file("out.wav"));
  REQUIRE(out.size() == in.size());
  double err = 0.0;
  for (size_t i = 0; i < in.samples.size(); ++i) {
    const double d = in.samples[i] - out.samples[i];
    err += d * d;
  }
  CHECK(std::sqrt(err / 16000.0) < 1e-6);
}

TEST_CASE("cli enhance exits 2 on malformed audio or checkpoints") {
  TempDir dir("enhance_bad");
  Model<float> model(tiny_config(), 5);
  save_checkpoint(model, dir.file("model.mfn1"));
  write_stereo_pcm16(dir.file("stereo.wav"));
  CHECK(run_cli("enhance --ckpt " + dir.file("model.mfn1") + " --in " + dir.file("stereo.wav") +
                " --out " + dir.file("out.wav"))
            .exit_code == 2);

  std::ofstream junk(dir.file("junk.mfn1"), std::ios::binary);
  junk << "not a checkpoint";
  junk.close();
  write_wav(dir.file("in.wav"), sine_wave(4000, 440.0));
  CHECK(run_cli("enhance --ckpt " + dir.file("junk.mfn1") + " --in " + dir.file("in.wav") +
                " --out " + dir.file("out.wav"))
            .exit_code == 2);
}

TEST_CASE("cli train runs a toy job end to end") {
  TempDir dir("train");
  write_train_fixture(dir);
  {
    std::ofstream cfg(dir.file("config.json"));
    cfg << train_config_text(dir.file("out"));
  }
  auto r = run_cli("train --config " + dir.file("config.json"));
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("steps").get<int64_t>() == 2);
  CHECK(fs::exists(doc.at("checkpoint").get<std::string>()));
  CHECK(fs::exists(doc.at("loss_curve").get<std::string>()));
  CHECK(std::isfinite(doc.at("final_epoch_loss").get<double>()));

  // The written checkpoint loads and matches the configured architecture.
  Model<float> m = load_checkpoint(doc.at("checkpoint").get<std::string>());
  CHECK(m.config().base_channels == 2);
}

TEST_CASE("cli train rejects bad configs with exit 2") {
  TempDir dir("train_bad");
  write_train_fixture(dir);
  {
    std::ofstream cfg(dir.file("config.json"));
    cfg << train_config_text(dir.file("out"));
  }
  CHECK(run_cli("train --config " + dir.file("absent.json")).exit_code == 2);
  CHECK(run_cli("train --config " + dir.file("config.json") + " --set train.gamma=1.5")
            .exit_code == 2);
  CHECK(run_cli("train --config " + dir.file("config.json") + " --set train.typo=1")
            .exit_code == 2);
  CHECK(run_cli("train --config " + dir.file("config.json") + " --set model.head=banana")
            .exit_code == 2);
}

TEST_CASE("cli train exits 3 when the loss explodes") {
  TempDir dir("train_blowup");
  write_train_fixture(dir);
  {
    std::ofstream cfg(dir.file("config.json"));
    cfg << train_config_text(dir.file("out"));
  }
  auto r = run_cli("train --config " + dir.file("config.json") +
                   " --set train.lr_max=1e15 --set train.warmup_epochs=0"
                   " --set train.total_epochs=4");
  CHECK(r.exit_code == 3);
  CHECK(fs::exists(dir.file("out") + "/checkpoint_last_good.mfn1"));
  CHECK_FALSE(fs::exists(dir.file("out") + "/checkpoint.mfn1"));
}

TEST_CASE("cli train with a fixed seed is byte reproducible") {
  TempDir dir("train_seed");
  write_train_fixture(dir);
  {
    std::ofstream cfg(dir.file("config.json"));
    cfg << train_config_text(dir.file("out1"));
  }
  auto r1 = run_cli("train --config " + dir.file("config.json") + " --seed 5");
  auto r2 = run_cli("train --config " + dir.file("config.json") + " --seed 5 --set out_dir=" +
                    dir.file("out2"));
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir.file("out1") + "/checkpoint.mfn1") ==
        slurp(dir.file("out2") + "/checkpoint.mfn1"));
  CHECK(slurp(dir.file("out1") + "/loss_curve.json") ==
        slurp(dir.file("out2") + "/loss_curve.json"));

  auto r3 = run_cli("train --config " + dir.file("config.json") + " --seed 6 --set out_dir=" +
                    dir.file("out3"));
  REQUIRE(r3.exit_code == 0);
  CHECK(slurp(dir.file("out1") + "/checkpoint.mfn1") !=
        slurp(dir.file("out3") + "/checkpoint.mfn1"));
}

TEST_CASE("cli gradcheck passes for a single well-behaved op") {
  auto r = run_cli("gradcheck --op add");
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("pass").get<bool>());
  CHECK(doc.at("tolerance").get<double>() == 1e-4);
  REQUIRE(doc.at("results").size() == 1);
  CHECK(doc.at("results")[0].at("op").get<std::string>() == "add");
  CHECK(doc.at("results")[0].at("seeds").get<int>() >= 10);
  CHECK(doc.at("results")[0].at("max_rel_err").get<double>() < 1e-4);
}

TEST_CASE("cli gradcheck rejects unknown ops and flags broken gradients") {
  CHECK(run_cli("gradcheck --op definitely_not_an_op").exit_code == 2);
  // The deliberately wrong fixture gradient must be caught, exit 1.
  auto r = run_cli("gradcheck --op corrupt-fixture");
  CHECK(r.exit_code == 1);
  const json doc = parse_stdout(r);
  CHECK_FALSE(doc.at("pass").get<bool>());
}

TEST_CASE("cli info reports the channel plan from a config file") {
  TempDir dir("info");
  {
    std::ofstream cfg(dir.file("model.json"));
    cfg << R"({"base_channels": 3})";
  }
  auto r = run_cli("info --config " + dir.file("model.json"));
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("base_channels").get<int64_t>() == 3);
  CHECK(doc.at("channel_plan") == json::array({3, 6, 12, 24, 48, 24, 12, 6, 3}));
  CHECK(doc.at("params").get<int64_t>() > 0);
  CHECK(doc.at("macs_per_second").get<double>() > 0.0);
  CHECK(doc.at("head").get<std::string>() == "map_reverse_noise");
}

TEST_CASE("cli info reads a checkpoint and refuses conflicting sources") {
  TempDir dir("info2");
  Model<float> model(tiny_config(), 9);
  save_checkpoint(model, dir.file("model.mfn1"));
  auto r = run_cli("info --ckpt " + dir.file("model.mfn1"));
  CHECK(r.exit_code == 0);
  const json doc = parse_stdout(r);
  CHECK(doc.at("base_channels").get<int64_t>() == 2);
  CHECK(doc.at("depths").at("bottleneck").get<int64_t>() == 1);

  {
    std::ofstream cfg(dir.file("model.json"));
    cfg << R"({"base_channels": 3})";
  }
  CHECK(run_cli("info --ckpt " + dir.file("model.mfn1") + " --config " + dir.file("model.json"))
            .exit_code == 2);
}
