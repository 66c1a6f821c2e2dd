// SPDX-License-Identifier: Apache-2.0
#include "siamban/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace siamban {

namespace {

constexpr char kMagic[8] = {'S', 'B', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string header = ckpt.header.dump();
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::int32_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  }
  put<std::uint64_t>(out, fnv1a(out));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint file");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != fnv1a(bytes.substr(0, body))) throw CheckpointError("checkpoint '" + path.string() + "' is corrupt (checksum mismatch)");

  Reader r(bytes, body);
  r.get_string(sizeof(kMagic));
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  const auto header_len = r.get<std::uint64_t>();
  try {
    ckpt.header = nlohmann::json::parse(r.get_string(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("tensor '" + name + "' has implausible rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = r.get<std::int32_t>();
    Tensor t(shape);
    r.get_floats(t.data(), t.size());
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
  return ckpt;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"backbone",
           {{"variant", std::string(to_string(cfg.backbone.variant))},
            {"levels", cfg.backbone.levels},
            {"reduced_channels", cfg.backbone.reduced_channels},
            {"stride", cfg.backbone.stride},
            {"tiny_width", cfg.backbone.tiny_width}}},
          {"template_size", cfg.template_size},
          {"search_size", cfg.search_size},
          {"template_feature_size", cfg.template_feature_size},
          {"norm_groups", cfg.norm_groups},
          {"init_seed", cfg.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  const auto& b = j.at("backbone");
  cfg.backbone.variant = parse_backbone_variant(b.at("variant").get<std::string>());
  cfg.backbone.levels = b.at("levels").get<std::vector<int>>();
  cfg.backbone.reduced_channels = b.at("reduced_channels").get<int>();
  cfg.backbone.stride = b.at("stride").get<int>();
  cfg.backbone.tiny_width = b.at("tiny_width").get<int>();
  cfg.template_size = j.at("template_size").get<int>();
  cfg.search_size = j.at("search_size").get<int>();
  cfg.template_feature_size = j.at("template_feature_size").get<int>();
  cfg.norm_groups = j.at("norm_groups").get<int>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  return cfg;
}

Checkpoint model_to_checkpoint(const SiamBanModel& model, nlohmann::json extra) {
  Checkpoint ckpt;
  ckpt.header = {{"format", "siamban-checkpoint"}, {"model", to_json(model.config())}, {"extra", std::move(extra)}};
  for (const Parameter& p : model.parameters()) ckpt.tensors.emplace_back(p.name, p.var->value);
  for (const auto& [name, v] : model.buffers()) ckpt.tensors.emplace_back(name, v->value);
  return ckpt;
}

void load_parameters(SiamBanModel& model, const Checkpoint& ckpt) {
  auto copy_into = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw CheckpointError("checkpoint is missing '" + name + "'");
    if (!src->same_shape(dst)) {
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint " + src->shape_string() + ", model " +
                            dst.shape_string());
    }
    dst = *src;
  };
  for (Parameter& p : model.parameters()) copy_into(p.name, p.var->value);
  for (const auto& [name, v] : model.buffers()) copy_into(name, v->value);
}

SiamBanModel model_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(ckpt.header.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header lacks a valid model config: ") + e.what());
  }
  SiamBanModel model(cfg);
  load_parameters(model, ckpt);
  return model;
}

void save_model(const std::filesystem::path& path, const SiamBanModel& model, nlohmann::json extra) {
  write_checkpoint(path, model_to_checkpoint(model, std::move(extra)));
}

SiamBanModel load_model(const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); }

}  // namespace siamban
