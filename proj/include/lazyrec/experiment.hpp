#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lazyrec/feedback_sim.hpp"
#include "lazyrec/model_config.hpp"
#include "lazyrec/optimizer.hpp"
#include "lazyrec/policy_opt.hpp"
#include "lazyrec/reward_shaping.hpp"

namespace lazyrec {

// Non-finite loss or parameters during a run. The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version_string();

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 32;
  std::optional<double> lr;  // defaults to model.lr
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // 0 disables
  Organization organization = Organization::newest_only;
  std::size_t eval_every = 100;
  std::size_t eval_size = 512;
};

enum class Arm { traditional_only, with_onerec };
std::string to_string(Arm a);
Arm parse_arm(const std::string& name);

struct RlConfig {
  ObjectiveConfig objective;
  RewardConfig reward;
  Arm arm = Arm::with_onerec;
  std::size_t steps = 1000;
  std::size_t users_per_step = 8;
  std::size_t group_size = 4;  // exposures per user and step
  std::size_t beam = 16;
  double lr = 1e-4;
  double grad_clip = 0.0;  // 0 disables
  std::size_t warmup_impressions = 2000;
  std::size_t serving_refresh = 1;  // steps between syncs of the exposure model
  std::string checkpoint;  // pretrained model; empty starts from initialization
};

struct SweepConfig {
  std::string axis = "g_kv";  // l_kv, s_kv, g_kv or model_size
  std::vector<std::size_t> values;
};

void to_json(nlohmann::json& j, const TrainConfig& t);
void from_json(const nlohmann::json& j, TrainConfig& t);
void to_json(nlohmann::json& j, const RlConfig& r);
void from_json(const nlohmann::json& j, RlConfig& r);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/default";
  ModelConfig model;
  WorldConfig sim;
  TrainConfig train;
  RlConfig rl;
  SweepConfig sweep;
  std::vector<double> cost_context_lens{512.0, 3000.0};
  std::size_t dump_impressions = 1000;

  // Aligns the world with the model (codebook size, context shape) and
  // checks every invariant. Throws ConfigError.
  void resolve();
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing fields keep their defaults; unknown top-level keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Applies LAZYREC_<A>__<B>=value overrides (keys lowercased, "__" nests) to
// `j`. Values parse as JSON when possible, otherwise as strings.
void apply_env_overrides(nlohmann::json& j, const std::vector<std::string>& environ_entries,
                         const std::string& prefix = "LAZYREC_");
std::vector<std::string> current_environment();

// Reads a config file (JSON with // comments allowed), applies environment
// overrides and resolves it.
ExperimentConfig load_config(const std::filesystem::path& path);

// Line-buffered CSV writer; every row is flushed.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

std::string fmt(double v);  // 17 significant digits, round-trips; NaN as "nan"

// Writes config.json, seed and version into `dir` (created if needed).
void prepare_run_dir(const std::filesystem::path& dir, const ExperimentConfig& cfg);

struct PretrainResult {
  std::size_t steps_done = 0;
  double final_loss = 0.0;
  double final_eval_loss = 0.0;
  double gflops_per_sample = 0.0;
};

struct RlResult {
  std::vector<double> grad_norms;
  std::vector<double> prob_grad_norms;      // |dL/dpi| over all tokens
  std::vector<double> neg_prob_grad_norms;  // same, negative-advantage tokens only
  std::vector<double> mean_q;  // NaN when no exposed item had a peer group
  std::size_t clamp_total = 0;
};

// Metrics CSV schemas (version 1), documented in docs/metrics.md.
extern const std::vector<std::string> kPretrainColumns;
extern const std::vector<std::string> kRlColumns;

PretrainResult cmd_pretrain(const ExperimentConfig& cfg);
RlResult cmd_rl(const ExperimentConfig& cfg);
void cmd_cost(const ExperimentConfig& cfg);
// Returns the number of failed sweep points.
std::size_t cmd_sweep(const ExperimentConfig& cfg);
void cmd_dump_world(const ExperimentConfig& cfg);

}  // namespace lazyrec
