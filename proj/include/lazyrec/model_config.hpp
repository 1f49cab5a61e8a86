#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lazyrec {

// Raised for configuration values that violate a model or experiment
// invariant. The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MoeConfig {
  std::size_t n_routed = 8;
  std::size_t n_shared = 1;
  std::size_t top_k = 3;
  std::size_t moe_intermediate = 0;  // 0: same as the dense ffn_intermediate
  std::size_t first_dense_layers = 2;

  bool operator==(const MoeConfig&) const = default;
};

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;   // query heads
  std::size_t d_head = 8;
  std::size_t g_kv = 4;      // key/value head groups
  std::size_t l_kv = 1;      // distinct key/value layers
  std::size_t s_kv = 1;      // 1: tied key/value, 2: separate
  std::size_t vocab = 16;    // codebook size per semantic-ID level
  std::size_t context_len = 8;
  // Width of raw context features. 0 means tokens arrive at d_context and
  // no input projection exists.
  std::size_t context_input_dim = 0;
  std::size_t ffn_intermediate = 0;  // 0: 4 * d_model
  std::optional<MoeConfig> moe;
  double lr = 3e-4;
  double rmsnorm_eps = 1e-6;
  double init_std = 0.02;
  double router_bias_rate = 1e-3;

  std::size_t d_context() const { return s_kv * l_kv * g_kv * d_head; }
  std::size_t kv_width() const { return g_kv * d_head; }
  std::size_t ffn_width() const { return ffn_intermediate ? ffn_intermediate : 4 * d_model; }
  std::size_t moe_width() const;
  std::size_t heads_per_group() const { return n_heads / g_kv; }
  bool layer_uses_moe(std::size_t layer) const;

  // Throws ConfigError on any violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// floor(layer * l_kv / n_layers): which shared key/value set a block reads.
std::size_t kv_layer_index(std::size_t layer, const ModelConfig& cfg);

void to_json(nlohmann::json& j, const MoeConfig& m);
void from_json(const nlohmann::json& j, MoeConfig& m);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Dense scaling rows (d_model, n_layers, n_heads, embed_dim) of the
// reference configurations, with V = 8192, ffn_intermediate = 4 d_model,
// d_head = d_model / n_heads, G_kv = n_heads, L_kv = S_kv = 1, 512 context
// tokens and a context input projection of width 3 * embed_dim.
struct ReferenceModel {
  std::string name;
  double nominal_params;
  std::size_t d_model, n_layers, n_heads, embed_dim;
  double lr;
  ModelConfig config() const;
};

const std::vector<ReferenceModel>& reference_models();
const ReferenceModel& reference_model(const std::string& name);

}  // namespace lazyrec
