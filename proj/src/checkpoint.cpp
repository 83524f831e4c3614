//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/checkpoint.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mvcgt {
namespace {
  namespace fs = std::filesystem;
  using nlohmann::json;

  constexpr const char *kFormat = "mvcgt-checkpoint";

  void put_f32(std::string &out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k)
      out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
  }

  float get_f32(const char *p) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k]))
              << (8 * k);
    return std::bit_cast<float>(bits);
  }

  std::string read_all(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
      throw CheckpointError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
}  // namespace

template <class T>
void save_checkpoint(const std::string &dir, const CrystalModel<T> &model,
                     const std::string &kind, const RunConfig &config,
                     const std::optional<Normalizer> &normalizer) {
  const fs::path root(dir);
  fs::create_directories(root);

  json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["kind"] = kind;
  manifest["config"] = json::parse(config.to_json());
  manifest["with_fusion_head"] = model.config().with_fusion_head;
  manifest["with_denoise_heads"] = model.config().with_denoise_heads;
  manifest["seed"] = model.params().seed();
  if (normalizer)
    manifest["normalizer"] = { { "mean", normalizer->mean },
                               { "std", normalizer->std } };
  else
    manifest["normalizer"] = nullptr;
  manifest["dtype"] = "float32-le";

  std::string payload;
  json params = json::array();
  for (const auto &e: model.params().entries()) {
    params.push_back({ { "name", e.name },
                       { "shape", e.tensor.shape() },
                       { "trainable", e.trainable } });
    for (T v: e.tensor.data())
      put_f32(payload, static_cast<float>(v));
  }
  manifest["params"] = params;
  manifest["payload_bytes"] = payload.size();

  std::ofstream(root / "params.bin", std::ios::binary)
    .write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
}

CheckpointInfo read_manifest(const std::string &dir) {
  json m;
  try {
    m = json::parse(read_all(fs::path(dir) / "manifest.json"));
  } catch (const json::parse_error &e) {
    throw CheckpointError(std::string("corrupt manifest: ") + e.what());
  }
  if (m.value("format", "") != kFormat)
    throw CheckpointError("not a checkpoint manifest: " + dir);
  const int version = m.value("version", -1);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version)
                          + " is not supported (expected "
                          + std::to_string(kCheckpointVersion) + ")");
  try {
    CheckpointInfo info;
    info.kind = m.at("kind").get<std::string>();
    info.config = parse_config(m.at("config").dump());
    info.with_fusion_head = m.at("with_fusion_head").get<bool>();
    info.with_denoise_heads = m.at("with_denoise_heads").get<bool>();
    info.seed = m.at("seed").get<std::uint64_t>();
    if (!m.at("normalizer").is_null())
      info.normalizer = Normalizer { m["normalizer"].at("mean").get<double>(),
                                     m["normalizer"].at("std").get<double>() };
    for (const auto &p: m.at("params"))
      info.params.push_back({ p.at("name").get<std::string>(),
                              p.at("shape").get<Shape>(),
                              p.at("trainable").get<bool>() });
    return info;
  } catch (const json::exception &e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
}

template <class T>
std::unique_ptr<CrystalModel<T>> load_checkpoint(const std::string &dir,
                                                 CheckpointInfo *info_out) {
  CheckpointInfo info = read_manifest(dir);
  auto model = std::make_unique<CrystalModel<T>>(
    info.config.model(info.with_fusion_head, info.with_denoise_heads),
    info.seed);
  auto &entries = model->params().entries();
  if (entries.size() != info.params.size())
    throw CheckpointError("checkpoint lists "
                          + std::to_string(info.params.size())
                          + " tensors, model has "
                          + std::to_string(entries.size()));
  std::size_t expected = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto &p = info.params[k];
    if (p.name != entries[k].name || p.shape != entries[k].tensor.shape())
      throw CheckpointError("tensor " + std::to_string(k) + " mismatch: "
                            + p.name + " " + shape_str(p.shape) + " vs "
                            + entries[k].name + " "
                            + shape_str(entries[k].tensor.shape()));
    expected += shape_numel(p.shape) * 4;
  }
  const std::string payload = read_all(fs::path(dir) / "params.bin");
  if (payload.size() != expected)
    throw CheckpointError("payload has " + std::to_string(payload.size())
                          + " bytes, manifest needs "
                          + std::to_string(expected)
                          + (payload.size() < expected ? " (truncated)" : ""));
  const char *p = payload.data();
  for (auto &e: entries)
    for (T &v: e.tensor.data()) {
      v = static_cast<T>(get_f32(p));
      p += 4;
    }
  if (info_out)
    *info_out = std::move(info);
  return model;
}

template <class T>
void round_to_storage(ParamStore<T> &store) {
  for (auto &e: store.entries())
    for (T &v: e.tensor.data())
      v = static_cast<T>(static_cast<float>(v));
}

#define MVCGT_INSTANTIATE_CHECKPOINT(T)                                      \
  template void save_checkpoint(const std::string &, const CrystalModel<T> &, \
                                const std::string &, const RunConfig &,      \
                                const std::optional<Normalizer> &);          \
  template std::unique_ptr<CrystalModel<T>> load_checkpoint(                 \
    const std::string &, CheckpointInfo *);                                  \
  template void round_to_storage(ParamStore<T> &);
MVCGT_INSTANTIATE_CHECKPOINT(float)
MVCGT_INSTANTIATE_CHECKPOINT(double)
#undef MVCGT_INSTANTIATE_CHECKPOINT

}  // namespace mvcgt
