#include "lazyrec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace lazyrec {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'Z', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxString = 1u << 26;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated checkpoint");
  return v;
}

std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > kMaxString) throw CheckpointError("corrupt checkpoint: string length " + std::to_string(n));
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("truncated checkpoint");
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  // Write to a sibling temp file and rename so a crash never leaves a
  // half-written checkpoint in place of a good one.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    const std::string cfg = nlohmann::json(data.config).dump();
    put<std::uint64_t>(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put<std::uint64_t>(out, data.tensors.size());
    for (const auto& [name, arr] : data.tensors) {
      put<std::uint64_t>(out, name.size());
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(arr.rank()));
      for (std::size_t d : arr.shape()) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(arr.ptr()),
                static_cast<std::streamsize>(arr.size() * sizeof(double)));
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a lazyrec checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData data;
  const std::string cfg = get_string(in, get<std::uint64_t>(in));
  try {
    data.config = nlohmann::json::parse(cfg).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad config block in checkpoint: ") + e.what());
  }
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < count; ++t) {
    std::string name = get_string(in, get<std::uint64_t>(in));
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw CheckpointError("corrupt checkpoint: rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    Array arr(shape);
    if (!in.read(reinterpret_cast<char*>(arr.ptr()),
                 static_cast<std::streamsize>(arr.size() * sizeof(double)))) {
      throw CheckpointError("truncated tensor '" + name + "'");
    }
    data.tensors.emplace(std::move(name), std::move(arr));
  }
  return data;
}

CheckpointData snapshot(const LazyDecoder& model) {
  CheckpointData data;
  data.config = model.config();
  const auto& ps = model.params();
  for (std::size_t i = 0; i < ps.names().size(); ++i) {
    data.tensors.emplace(ps.names()[i], ps.vars()[i].value());
  }
  for (const auto& [layer, bias] : model.router_biases()) {
    data.tensors.emplace("router_bias." + std::to_string(layer), Array({bias.size()}, bias));
  }
  return data;
}

void restore(LazyDecoder& model, const CheckpointData& data) {
  if (!(data.config == model.config())) {
    throw CheckpointError("checkpoint config does not match the model");
  }
  auto& ps = model.params();
  for (std::size_t i = 0; i < ps.names().size(); ++i) {
    auto it = data.tensors.find(ps.names()[i]);
    if (it == data.tensors.end()) throw CheckpointError("checkpoint lacks '" + ps.names()[i] + "'");
    Array& dst = ps.vars()[i].mutable_value();
    if (it->second.shape() != dst.shape()) {
      throw CheckpointError("shape mismatch for '" + ps.names()[i] + "': " +
                            shape_to_string(it->second.shape()) + " vs " +
                            shape_to_string(dst.shape()));
    }
    dst = it->second;
  }
  for (auto& [layer, bias] : model.router_biases()) {
    auto it = data.tensors.find("router_bias." + std::to_string(layer));
    if (it == data.tensors.end() || it->second.size() != bias.size()) {
      throw CheckpointError("checkpoint lacks router bias for layer " + std::to_string(layer));
    }
    bias.assign(it->second.data().begin(), it->second.data().end());
  }
  if (data.tensors.size() != ps.names().size() + model.router_biases().size()) {
    for (const auto& [name, arr] : data.tensors) {
      const bool bias = name.rfind("router_bias.", 0) == 0;
      if (!bias && !ps.contains(name)) throw CheckpointError("unknown tensor '" + name + "' in checkpoint");
    }
    throw CheckpointError("checkpoint holds router biases the model does not have");
  }
}

void save_model(const std::filesystem::path& path, const LazyDecoder& model) {
  write_checkpoint(path, snapshot(model));
}

LazyDecoder load_model(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint(path);
  LazyDecoder model(data.config, 0);
  restore(model, data);
  return model;
}

}  // namespace lazyrec
