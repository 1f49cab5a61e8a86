#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "lazyrec/lazy_model.hpp"

namespace lazyrec {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointData {
  ModelConfig config;
  std::map<std::string, Array> tensors;
};

// Layout is described in docs/checkpoint_format.md.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

// Parameters plus router bias buffers ("router_bias.<layer>").
CheckpointData snapshot(const LazyDecoder& model);
void save_model(const std::filesystem::path& path, const LazyDecoder& model);
LazyDecoder load_model(const std::filesystem::path& path);

// Overwrites every parameter and router bias of `model` from `data`.
void restore(LazyDecoder& model, const CheckpointData& data);

}  // namespace lazyrec
