#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lazyrec/autodiff.hpp"
#include "lazyrec/model_config.hpp"

namespace lazyrec {

// A catalog item identified by its three codebook indices, coarse to fine.
struct SemanticItem {
  std::uint32_t s1 = 0, s2 = 0, s3 = 0;

  std::uint32_t operator[](std::size_t level) const { return level == 0 ? s1 : level == 1 ? s2 : s3; }
  auto operator<=>(const SemanticItem&) const = default;
};

std::string to_string(const SemanticItem& item);

// Named trainable tensors in creation order.
class ParameterStore {
 public:
  ad::Var& add(const std::string& name, Array init, bool decay);
  const ad::Var& get(const std::string& name) const;
  ad::Var& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<ad::Var>& vars() { return vars_; }
  const std::vector<ad::Var>& vars() const { return vars_; }
  bool decays(std::size_t i) const { return decay_[i]; }
  std::size_t total_elements() const;
  // Sum of element counts of parameters whose names start with `prefix`.
  std::size_t elements_with_prefix(const std::string& prefix) const;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
  std::vector<bool> decay_;
  std::map<std::string, std::size_t> index_;
};

// L_kv normalized (key, value) pairs, each [batch, context_len, G_kv, d_head].
// With S_kv == 1 the value is the same node as the key.
struct SharedKVSet {
  std::vector<std::pair<ad::Var, ad::Var>> pairs;
};

struct DecoderTrace {
  std::vector<ad::Var> hidden;          // h(0) .. h(N), each [batch, 3, d_model]
  std::array<ad::Var, 3> logits;        // [batch, V] per semantic-ID position
  std::array<ad::Var, 3> probs;         // softmax of logits
  std::vector<const ad::Node*> kv_key;  // key node read by each block
  std::map<std::size_t, std::vector<std::size_t>> expert_loads;  // MoE layer -> tokens per expert
};

struct MoeOutput {
  ad::Var output;
  std::vector<std::size_t> loads;
};

// Weights of one MoE layer, resolved from the parameter store.
struct MoeWeights {
  ad::Var router;
  std::vector<std::array<ad::Var, 3>> experts;  // gate, up, down
  std::vector<std::array<ad::Var, 3>> shared;
};

namespace layers {

// Projection-free grouped-query cross-attention. x: [B, T, d_model];
// key/value: [B, N, G_kv, d_head]. Only query and output projections exist.
ad::Var lazy_cross_attention(const ad::Var& x, const ad::Var& key, const ad::Var& value,
                             const ad::Var& wq, const ad::Var& wo, const ModelConfig& cfg);

ad::Var causal_self_attention(const ad::Var& x, const ad::Var& wq, const ad::Var& wk,
                              const ad::Var& wv, const ad::Var& wo, const ModelConfig& cfg);

// down(silu(gate(x)) * up(x))
ad::Var gated_ffn(const ad::Var& x, const ad::Var& gate, const ad::Var& up, const ad::Var& down);

// Top-k selection ranks router score + bias (ties: lowest expert index);
// combination weights are the softmax of the unbiased scores over the
// selected experts. Shared experts apply to every token.
MoeOutput moe_ffn(const ad::Var& x, const MoeWeights& w, const std::vector<double>& router_bias,
                  std::size_t top_k);

}  // namespace layers

// bias_e -= rate * sign(load_e - mean load)
void update_router_bias(std::vector<double>& bias, const std::vector<std::size_t>& loads,
                        double rate);

class LazyDecoder {
 public:
  LazyDecoder(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Router bias buffers keyed by MoE layer index (not trained by gradient).
  std::map<std::size_t, std::vector<double>>& router_biases() { return router_bias_; }
  const std::map<std::size_t, std::vector<double>>& router_biases() const { return router_bias_; }

  // [B, 3, d_model]: embeddings of [BOS, s1, s2] plus target positions.
  ad::Var embed_targets(const std::vector<SemanticItem>& items) const;

  // context: [B, context_len, d_in] with d_in = context_input_dim or d_context.
  SharedKVSet context_process(const Array& context) const;

  ad::Var cross_attention(const ad::Var& x, std::size_t layer, const SharedKVSet& kv) const;
  ad::Var self_attention(const ad::Var& x, std::size_t layer) const;
  ad::Var feed_forward(const ad::Var& x, std::size_t layer, DecoderTrace* trace) const;
  MoeWeights moe_weights(std::size_t layer) const;

  DecoderTrace forward(const std::vector<SemanticItem>& items, const SharedKVSet& kv) const;

  // Applies the balancing update for every MoE layer recorded in `trace`.
  void update_router_biases(const DecoderTrace& trace);

 private:
  void check_items(const std::vector<SemanticItem>& items) const;
  const ad::Var& p(const std::string& name) const { return params_.get(name); }

  ModelConfig cfg_;
  ParameterStore params_;
  std::map<std::size_t, std::vector<double>> router_bias_;
};

// -(1/3) sum_i log p(s^i | BOS, s^<i, context), averaged over the batch.
ad::Var gen_loss(const DecoderTrace& trace, const std::vector<SemanticItem>& items);

struct ParameterBreakdown {
  std::size_t embeddings = 0;
  std::size_t context_processor = 0;
  std::size_t cross_attention = 0;
  std::size_t self_attention = 0;
  std::size_t ffn = 0;
  std::size_t norms = 0;
  std::size_t output_heads = 0;
  std::size_t total() const {
    return embeddings + context_processor + cross_attention + self_attention + ffn + norms +
           output_heads;
  }
};

// Closed-form parameter count of LazyDecoder(cfg).
ParameterBreakdown count_parameters(const ModelConfig& cfg);

}  // namespace lazyrec
