#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mfnet/checkpoint.hpp"
#include "mfnet/config_io.hpp"
#include "mfnet/gradcheck.hpp"
#include "mfnet/objectives.hpp"
#include "mfnet/pipeline.hpp"
#include "mfnet/wav.hpp"

namespace {

using nlohmann::json;

// Exit codes: 0 success, 1 failed check, 2 usage or bad config/input,
// 3 numeric failure (non-finite training loss and the like).
constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

void emit(const json& doc) { std::cout << doc.dump(2) << std::endl; }

json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw mfnet::ConfigError(std::string(what) + ": cannot open " + path);
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw mfnet::ConfigError(std::string(what) + " " + path + ": " + e.what());
  }
}

// Applies one `--set dotted.path=value` override onto a JSON document.
// Values parse as JSON when possible (numbers, bools, arrays) and fall back
// to plain strings.
void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw mfnet::ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }

  json* node = &doc;
  size_t begin = 0;
  while (true) {
    const size_t dot = key.find('.', begin);
    const std::string part = key.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (part.empty()) throw mfnet::ConfigError("--set: empty path component in '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    begin = dot + 1;
  }
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              bool seed_given, uint64_t seed_override) {
  json doc = load_json_file(config_path, "train config");
  for (const auto& assignment : overrides) apply_override(doc, assignment);

  if (!doc.is_object()) throw mfnet::ConfigError("train config: expected a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    if (k != "manifest" && k != "out_dir" && k != "model" && k != "train") {
      throw mfnet::ConfigError("train config: unknown key '" + k + "'");
    }
  }
  if (!doc.contains("manifest") || !doc.contains("out_dir")) {
    throw mfnet::ConfigError("train config: 'manifest' and 'out_dir' are required");
  }

  const mfnet::ModelConfig model_cfg =
      mfnet::model_config_from_json(doc.value("model", json::object()));
  mfnet::TrainConfig train_cfg =
      mfnet::train_config_from_json(doc.value("train", json::object()));
  if (seed_given) train_cfg.seed = seed_override;

  std::string manifest_path = doc.at("manifest").get<std::string>();
  {
    // Relative manifest paths are resolved against the config file location.
    std::filesystem::path mp(manifest_path);
    if (!mp.is_absolute()) {
      manifest_path = (std::filesystem::path(config_path).parent_path() / mp).string();
    }
  }
  const std::string out_dir = doc.at("out_dir").get<std::string>();

  const std::vector<mfnet::MixSpec> manifest = mfnet::load_manifest(manifest_path);
  std::cerr << "training on " << manifest.size() << " mixtures for " << train_cfg.total_epochs
            << " epochs\n";

  const mfnet::TrainResult result = mfnet::train(manifest, train_cfg, model_cfg, out_dir);

  json out{{"checkpoint", (std::filesystem::path(out_dir) / "checkpoint.mfn1").string()},
           {"loss_curve", (std::filesystem::path(out_dir) / "loss_curve.json").string()},
           {"steps", result.steps},
           {"initial_epoch_loss", result.epoch_mean_loss.front()},
           {"final_epoch_loss", result.epoch_mean_loss.back()}};
  emit(out);
  return kExitOk;
}

int cmd_enhance(const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path) {
  mfnet::Model<float> model = mfnet::load_checkpoint(ckpt_path);
  const mfnet::Waveform noisy = mfnet::read_wav(in_path);

  mfnet::EnhanceStats stats;
  const auto t0 = std::chrono::steady_clock::now();
  const mfnet::Waveform enhanced = mfnet::enhance(noisy, model, &stats);
  const auto t1 = std::chrono::steady_clock::now();

  mfnet::write_wav(out_path, enhanced, mfnet::WavEncoding::kFloat32);

  const double wall = std::chrono::duration<double>(t1 - t0).count();
  const double audio_seconds = noisy.duration_seconds();
  emit(json{{"output", out_path},
            {"samples", enhanced.size()},
            {"frames", stats.frames},
            {"clipped_samples", stats.clipped_samples},
            {"rtf", audio_seconds > 0.0 ? wall / audio_seconds : 0.0}});
  return kExitOk;
}

int cmd_evaluate(const std::string& ref_path, const std::string& est_path) {
  const mfnet::Waveform ref = mfnet::read_wav(ref_path);
  const mfnet::Waveform est = mfnet::read_wav(est_path);
  emit(json{{"file", est_path},
            {"snr_db", mfnet::snr_db(ref, est)},
            {"si_sdr_db", mfnet::si_sdr_db(ref, est)},
            {"samples", ref.size()}});
  return kExitOk;
}

int cmd_gradcheck(const std::string& op) {
  std::vector<mfnet::GradCheckResult> results;
  if (op.empty()) {
    results = mfnet::run_gradcheck_all();
  } else {
    results.push_back(mfnet::run_gradcheck_op(op));
  }

  bool all_pass = true;
  json rows = json::array();
  for (const auto& r : results) {
    rows.push_back({{"op", r.op},
                    {"max_rel_err", r.max_rel_err},
                    {"seeds", r.seeds},
                    {"pass", r.pass}});
    all_pass = all_pass && r.pass;
    std::cerr << (r.pass ? "pass" : "FAIL") << "  " << r.op << "  max_rel_err=" << r.max_rel_err
              << "\n";
  }
  emit(json{{"tolerance", mfnet::kGradCheckTolerance}, {"results", rows}, {"pass", all_pass}});
  return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_info(const std::string& ckpt_path, const std::string& config_path) {
  mfnet::ModelConfig cfg;
  if (!ckpt_path.empty()) {
    cfg = mfnet::load_checkpoint(ckpt_path).config();
  } else if (!config_path.empty()) {
    const json doc = load_json_file(config_path, "model config");
    // Accept either a bare model config or a full train config document.
    cfg = mfnet::model_config_from_json(
        doc.is_object() && doc.contains("model") ? doc.at("model") : doc);
  }

  const mfnet::ModelCosts costs = mfnet::count_params_and_macs(cfg);
  mfnet::Model<float> model(cfg, 0);

  json depths{{"encoder", cfg.encoder_depths},
              {"bottleneck", cfg.bottleneck_depth},
              {"decoder", cfg.decoder_depths}};
  emit(json{{"base_channels", cfg.base_channels},
            {"depths", depths},
            {"head", mfnet::head_mode_name(cfg.head)},
            {"channel_plan", model.channel_trace()},
            {"params", costs.params},
            {"macs_per_second", costs.macs_per_second}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech enhancement on short-time DCT spectra"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, in_path, out_path, ref_path, est_path, op_name;
  std::vector<std::string> overrides;
  uint64_t seed_override = 0;

  CLI::App* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", config_path, "JSON config path")->required();
  train->add_option("--set", overrides, "Override config values, e.g. --set train.seed=3");
  CLI::Option* seed_opt = train->add_option("--seed", seed_override, "Override the train seed");

  CLI::App* enhance = app.add_subcommand("enhance", "Denoise a WAV file with a checkpoint");
  enhance->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  enhance->add_option("--in", in_path, "Noisy input WAV")->required();
  enhance->add_option("--out", out_path, "Enhanced output WAV")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "SNR / SI-SDR between two WAV files");
  evaluate->add_option("--ref", ref_path, "Reference WAV")->required();
  evaluate->add_option("--est", est_path, "Estimate WAV")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference checks of every op's gradients");
  gradcheck->add_option("--op", op_name, "Check a single op by name");

  CLI::App* info = app.add_subcommand("info", "Report config, parameter count, and MACs");
  CLI::Option* info_ckpt = info->add_option("--ckpt", ckpt_path, "Checkpoint path");
  CLI::Option* info_cfg = info->add_option("--config", config_path, "Model config JSON path");
  info_ckpt->excludes(info_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) {
      return cmd_train(config_path, overrides, seed_opt->count() > 0, seed_override);
    }
    if (enhance->parsed()) return cmd_enhance(ckpt_path, in_path, out_path);
    if (evaluate->parsed()) return cmd_evaluate(ref_path, est_path);
    if (gradcheck->parsed()) return cmd_gradcheck(op_name);
    if (info->parsed()) {
      if (ckpt_path.empty() && config_path.empty()) {
        std::cerr << "info: pass --ckpt or --config (using built-in defaults)\n";
      }
      return cmd_info(ckpt_path, config_path);
    }
  } catch (const mfnet::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const mfnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mfnet::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mfnet::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mfnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
