#include "lazyrec/model_config.hpp"

namespace lazyrec {

std::size_t ModelConfig::moe_width() const {
  if (moe && moe->moe_intermediate) return moe->moe_intermediate;
  return ffn_width();
}

bool ModelConfig::layer_uses_moe(std::size_t layer) const {
  return moe.has_value() && layer >= moe->first_dense_layers;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_head == 0 || vocab == 0 ||
      context_len == 0) {
    fail("d_model, n_layers, n_heads, d_head, vocab and context_len must be positive");
  }
  if (n_heads * d_head != d_model) {
    fail("n_heads * d_head (" + std::to_string(n_heads * d_head) + ") must equal d_model (" +
         std::to_string(d_model) + ")");
  }
  if (g_kv == 0 || n_heads % g_kv != 0) {
    fail("g_kv (" + std::to_string(g_kv) + ") must divide n_heads (" + std::to_string(n_heads) +
         ")");
  }
  if (l_kv < 1 || l_kv > n_layers) fail("l_kv must lie in [1, n_layers]");
  if (s_kv != 1 && s_kv != 2) fail("s_kv must be 1 or 2");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(rmsnorm_eps >= 0.0)) fail("rmsnorm_eps must be non-negative");
  if (moe) {
    if (moe->n_routed == 0) fail("moe.n_routed must be positive");
    if (moe->top_k == 0 || moe->top_k > moe->n_routed) {
      fail("moe.top_k (" + std::to_string(moe->top_k) + ") must lie in [1, n_routed]");
    }
  }
}

std::size_t kv_layer_index(std::size_t layer, const ModelConfig& cfg) {
  return layer * cfg.l_kv / cfg.n_layers;
}

void to_json(nlohmann::json& j, const MoeConfig& m) {
  j = {{"n_routed", m.n_routed},
       {"n_shared", m.n_shared},
       {"top_k", m.top_k},
       {"moe_intermediate", m.moe_intermediate},
       {"first_dense_layers", m.first_dense_layers}};
}

void from_json(const nlohmann::json& j, MoeConfig& m) {
  MoeConfig d;
  m.n_routed = j.value("n_routed", d.n_routed);
  m.n_shared = j.value("n_shared", d.n_shared);
  m.top_k = j.value("top_k", d.top_k);
  m.moe_intermediate = j.value("moe_intermediate", d.moe_intermediate);
  m.first_dense_layers = j.value("first_dense_layers", d.first_dense_layers);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d_model", c.d_model},
       {"n_layers", c.n_layers},
       {"n_heads", c.n_heads},
       {"d_head", c.d_head},
       {"g_kv", c.g_kv},
       {"l_kv", c.l_kv},
       {"s_kv", c.s_kv},
       {"vocab", c.vocab},
       {"context_len", c.context_len},
       {"context_input_dim", c.context_input_dim},
       {"ffn_intermediate", c.ffn_intermediate},
       {"lr", c.lr},
       {"rmsnorm_eps", c.rmsnorm_eps},
       {"init_std", c.init_std},
       {"router_bias_rate", c.router_bias_rate}};
  j["moe"] = c.moe ? nlohmann::json(*c.moe) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  // d_head defaults to d_model / n_heads when omitted.
  c.d_head = j.contains("d_head") ? j.at("d_head").get<std::size_t>()
                                  : (c.n_heads ? c.d_model / c.n_heads : d.d_head);
  c.g_kv = j.value("g_kv", c.n_heads);
  c.l_kv = j.value("l_kv", d.l_kv);
  c.s_kv = j.value("s_kv", d.s_kv);
  c.vocab = j.value("vocab", d.vocab);
  c.context_len = j.value("context_len", d.context_len);
  c.context_input_dim = j.value("context_input_dim", d.context_input_dim);
  c.ffn_intermediate = j.value("ffn_intermediate", d.ffn_intermediate);
  c.lr = j.value("lr", d.lr);
  c.rmsnorm_eps = j.value("rmsnorm_eps", d.rmsnorm_eps);
  c.init_std = j.value("init_std", d.init_std);
  c.router_bias_rate = j.value("router_bias_rate", d.router_bias_rate);
  if (j.contains("moe") && !j.at("moe").is_null()) {
    c.moe = j.at("moe").get<MoeConfig>();
  } else {
    c.moe.reset();
  }
}

ModelConfig ReferenceModel::config() const {
  ModelConfig c;
  c.d_model = d_model;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.d_head = d_model / n_heads;
  c.g_kv = n_heads;
  c.l_kv = 1;
  c.s_kv = 1;
  c.vocab = 8192;
  c.context_len = 512;
  c.context_input_dim = 3 * embed_dim;
  c.ffn_intermediate = 4 * d_model;
  c.lr = lr;
  return c;
}

const std::vector<ReferenceModel>& reference_models() {
  static const std::vector<ReferenceModel> rows = {
      {"0.1B", 0.1e9, 640, 12, 10, 32, 5.00e-4},   {"0.2B", 0.2e9, 896, 12, 14, 45, 3.54e-4},
      {"0.5B", 0.5e9, 1408, 14, 11, 70, 2.24e-4},  {"1B", 1e9, 1792, 18, 14, 90, 1.58e-4},
      {"2B", 2e9, 2304, 22, 18, 115, 1.12e-4},     {"4B", 4e9, 2944, 26, 23, 147, 7.91e-5},
      {"8B", 8e9, 3584, 34, 28, 179, 5.59e-5},
  };
  return rows;
}

const ReferenceModel& reference_model(const std::string& name) {
  for (const auto& r : reference_models()) {
    if (r.name == name) return r;
  }
  throw ConfigError("unknown reference model '" + name + "'");
}

}  // namespace lazyrec
