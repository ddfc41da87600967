#include "mfnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfnet/config_io.hpp"

namespace mfnet {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'N', '1'};

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) {
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            "cannot open checkpoint: " + path);
    }
  }

  void bytes(void* dst, size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            "checkpoint truncated: " + path_);
    }
  }

  uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  std::string str(uint32_t len) {
    std::string s(len, '\0');
    if (len > 0) bytes(s.data(), len);
    return s;
  }

  bool at_eof() {
    return in_.peek() == std::ifstream::traits_type::eof();
  }

 private:
  std::ifstream in_;
  std::string path_;
};

struct ManifestEntry {
  std::string name;
  Shape shape;
};

}  // namespace

void save_checkpoint(Model<float>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);

  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);

  const std::string cfg_json = model_config_to_json(model.config()).dump();
  write_u32(out, static_cast<uint32_t>(cfg_json.size()));
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  std::vector<ParamRef<float>> params = model.parameters();
  write_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    write_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& shape = p.tensor->shape();
    write_u32(out, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) write_u32(out, static_cast<uint32_t>(d));
  }
  for (const auto& p : params) {
    const auto& v = p.tensor->values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw Error("short write to checkpoint: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
  Reader r(path);

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::kBadMagic,
                          "not a checkpoint file (bad magic): " + path);
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kBadVersion,
                          "unsupported checkpoint version " + std::to_string(version) + ": " +
                              path);
  }

  const uint32_t cfg_len = r.u32();
  const std::string cfg_str = r.str(cfg_len);
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(nlohmann::json::parse(cfg_str));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::kConfigMismatch,
                          std::string("unreadable embedded config: ") + e.what());
  }

  Model<float> model(cfg, 0);
  std::vector<ParamRef<float>> params = model.parameters();

  const uint32_t count = r.u32();
  if (count != params.size()) {
    throw CheckpointError(CheckpointError::Kind::kShapeMismatch,
                          "checkpoint lists " + std::to_string(count) + " tensors, config needs " +
                              std::to_string(params.size()));
  }
  std::vector<ManifestEntry> manifest(count);
  for (auto& entry : manifest) {
    entry.name = r.str(r.u32());
    const uint32_t rank = r.u32();
    if (rank > 8) {
      throw CheckpointError(CheckpointError::Kind::kShapeMismatch,
                            "implausible tensor rank " + std::to_string(rank) + " in " + path);
    }
    entry.shape.resize(rank);
    for (auto& d : entry.shape) d = static_cast<int64_t>(r.u32());
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (manifest[i].name != params[i].name || manifest[i].shape != params[i].tensor->shape()) {
      throw CheckpointError(CheckpointError::Kind::kShapeMismatch,
                            "tensor " + std::to_string(i) + " is " + manifest[i].name + " " +
                                shape_str(manifest[i].shape) + ", config needs " +
                                params[i].name + " " + shape_str(params[i].tensor->shape()));
    }
  }
  for (auto& p : params) {
    auto& v = p.tensor->values();
    r.bytes(v.data(), v.size() * sizeof(float));
  }
  if (!r.at_eof()) {
    throw CheckpointError(CheckpointError::Kind::kTruncated,
                          "trailing bytes after tensor payload: " + path);
  }
  return model;
}

Model<float> load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Model<float> model = load_checkpoint(path);
  if (!(model.config() == expected)) {
    throw CheckpointError(CheckpointError::Kind::kConfigMismatch,
                          "checkpoint config does not match the requested config: " + path);
  }
  return model;
}

}  // namespace mfnet
