#include "lazyrec/lazy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lazyrec {

using ad::Var;

std::string to_string(const SemanticItem& item) {
  return "(" + std::to_string(item.s1) + "," + std::to_string(item.s2) + "," +
         std::to_string(item.s3) + ")";
}

// --- ParameterStore ----------------------------------------------------------

Var& ParameterStore::add(const std::string& name, Array init, bool decay) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter '" + name + "'");
  index_[name] = vars_.size();
  names_.push_back(name);
  vars_.push_back(ad::parameter(std::move(init)));
  decay_.push_back(decay);
  return vars_.back();
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return vars_[it->second];
}

Var& ParameterStore::get(const std::string& name) {
  return const_cast<Var&>(static_cast<const ParameterStore&>(*this).get(name));
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const Var& v : vars_) n += v.size();
  return n;
}

std::size_t ParameterStore::elements_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].rfind(prefix, 0) == 0) n += vars_[i].size();
  }
  return n;
}

// --- layers ------------------------------------------------------------------

namespace layers {

Var lazy_cross_attention(const Var& x, const Var& key, const Var& value, const Var& wq,
                         const Var& wo, const ModelConfig& cfg) {
  const Shape& xs = x.shape();
  const Shape& ks = key.shape();
  if (xs.size() != 3 || ks.size() != 4 || ks[0] != xs[0] || ks[2] != cfg.g_kv ||
      ks[3] != cfg.d_head || value.shape() != ks) {
    throw std::invalid_argument("lazy_cross_attention: query " + shape_to_string(xs) +
                                " incompatible with key " + shape_to_string(ks) + " / value " +
                                shape_to_string(value.shape()));
  }
  const std::size_t b = xs[0], t = xs[1], h = cfg.n_heads, dh = cfg.d_head, g = cfg.g_kv;
  const std::size_t r = cfg.heads_per_group();

  Var q = ad::matmul(x, wq);
  q = ad::permute(ad::reshape(q, {b, t, h, dh}), {0, 2, 1, 3});
  // Heads g*r .. g*r+r-1 share key/value group g.
  q = ad::reshape(q, {b, g, r * t, dh});
  Var k = ad::permute(key, {0, 2, 1, 3});
  Var v = value.same_node(key) ? k : ad::permute(value, {0, 2, 1, 3});

  Var scores = ad::scale(ad::matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var attn = ad::softmax(scores);
  Var out = ad::matmul(attn, v);
  out = ad::permute(ad::reshape(out, {b, h, t, dh}), {0, 2, 1, 3});
  return ad::matmul(ad::reshape(out, {b, t, h * dh}), wo);
}

Var causal_self_attention(const Var& x, const Var& wq, const Var& wk, const Var& wv,
                          const Var& wo, const ModelConfig& cfg) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) {
    throw std::invalid_argument("causal_self_attention: expected [B, T, D], got " +
                                shape_to_string(xs));
  }
  const std::size_t b = xs[0], t = xs[1], h = cfg.n_heads, dh = cfg.d_head;
  auto heads = [&](const Var& w) {
    return ad::permute(ad::reshape(ad::matmul(x, w), {b, t, h, dh}), {0, 2, 1, 3});
  };
  Var q = heads(wq), k = heads(wk), v = heads(wv);

  std::vector<std::uint8_t> mask(t * t, 0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask[i * t + j] = 1;
  }
  Var scores = ad::scale(ad::matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var attn = ad::softmax(scores, &mask, t);
  Var out = ad::permute(ad::matmul(attn, v), {0, 2, 1, 3});
  return ad::matmul(ad::reshape(out, {b, t, h * dh}), wo);
}

Var gated_ffn(const Var& x, const Var& gate, const Var& up, const Var& down) {
  return ad::matmul(ad::mul(ad::silu(ad::matmul(x, gate)), ad::matmul(x, up)), down);
}

MoeOutput moe_ffn(const Var& x, const MoeWeights& w, const std::vector<double>& router_bias,
                  std::size_t top_k) {
  const std::size_t n_experts = w.experts.size();
  if (top_k == 0 || top_k > n_experts) {
    throw std::invalid_argument("moe_ffn: top_k " + std::to_string(top_k) +
                                " outside [1, " + std::to_string(n_experts) + "]");
  }
  if (router_bias.size() != n_experts) {
    throw std::invalid_argument("moe_ffn: router bias has wrong length");
  }
  const Shape in_shape = x.shape();
  const std::size_t d = in_shape.back();
  const std::size_t tokens = x.size() / d;
  Var flat = ad::reshape(x, {tokens, d});
  Var scores = ad::matmul(flat, w.router);  // [tokens, E]

  std::vector<std::uint8_t> mask(tokens * n_experts, 0);
  std::vector<std::vector<std::size_t>> routed(n_experts);
  std::vector<std::size_t> order(n_experts);
  for (std::size_t tok = 0; tok < tokens; ++tok) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double* s = scores.value().ptr() + tok * n_experts;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return s[a] + router_bias[a] > s[b] + router_bias[b];
    });
    for (std::size_t i = 0; i < top_k; ++i) mask[tok * n_experts + order[i]] = 1;
  }
  for (std::size_t tok = 0; tok < tokens; ++tok) {
    for (std::size_t e = 0; e < n_experts; ++e) {
      if (mask[tok * n_experts + e]) routed[e].push_back(tok);
    }
  }
  Var weights = ad::softmax(scores, &mask, tokens);

  MoeOutput result;
  result.loads.resize(n_experts);
  Var total;
  auto accumulate = [&total](const Var& term) { total = total.defined() ? ad::add(total, term) : term; };
  for (const auto& s : w.shared) accumulate(gated_ffn(flat, s[0], s[1], s[2]));
  for (std::size_t e = 0; e < n_experts; ++e) {
    result.loads[e] = routed[e].size();
    if (routed[e].empty()) continue;
    Var xe = ad::gather_rows(flat, routed[e]);
    Var ye = gated_ffn(xe, w.experts[e][0], w.experts[e][1], w.experts[e][2]);
    Var we = ad::gather_rows(ad::slice(weights, 1, e, e + 1), routed[e]);
    accumulate(ad::scatter_rows(ad::mul(ye, we), routed[e], tokens));
  }
  result.output = ad::reshape(total, in_shape);
  return result;
}

}  // namespace layers

void update_router_bias(std::vector<double>& bias, const std::vector<std::size_t>& loads,
                        double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("update_router_bias: rate must be > 0");
  if (bias.size() != loads.size()) throw std::invalid_argument("update_router_bias: size mismatch");
  const double mean = std::accumulate(loads.begin(), loads.end(), 0.0) /
                      static_cast<double>(loads.size());
  for (std::size_t e = 0; e < bias.size(); ++e) {
    const double diff = static_cast<double>(loads[e]) - mean;
    bias[e] -= rate * static_cast<double>((diff > 0.0) - (diff < 0.0));
  }
}

// --- LazyDecoder ---------------------------------------------------------------

namespace {

Array truncated_normal(Shape shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Array a(std::move(shape));
  for (double& v : a.mutable_data()) {
    double z;
    do {
      z = normal(rng);
    } while (std::abs(z) > 2.0);
    v = z * std;
  }
  return a;
}

std::string block_name(std::size_t l, const std::string& leaf) {
  return "blocks." + std::to_string(l) + "." + leaf;
}

}  // namespace

LazyDecoder::LazyDecoder(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d_model, v = cfg_.vocab, dc = cfg_.d_context();
  const double std_in = cfg_.init_std;
  const double std_out = cfg_.init_std / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));
  auto ones = [](std::size_t n) { return Array(Shape{n}, 1.0); };
  auto matrix = [&](std::size_t r, std::size_t c, double s) {
    return truncated_normal({r, c}, s, rng);
  };

  // Row 0: BOS, rows 1..V: level-1 codes, rows V+1..2V: level-2 codes.
  params_.add("embed", matrix(1 + 2 * v, d, std_in), false);
  params_.add("target_pos", matrix(3, d, std_in), false);

  if (cfg_.context_input_dim > 0) {
    params_.add("ctx.in_proj", matrix(cfg_.context_input_dim, dc, std_in), true);
  }
  // Zero-initialized so an all-zero context starts out as all-zero keys.
  params_.add("ctx.pos", Array(Shape{cfg_.context_len, dc}, 0.0), false);
  for (std::size_t l = 0; l < cfg_.l_kv; ++l) {
    params_.add("ctx.k_norm." + std::to_string(l), ones(cfg_.kv_width()), false);
    if (cfg_.s_kv == 2) params_.add("ctx.v_norm." + std::to_string(l), ones(cfg_.kv_width()), false);
  }

  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    params_.add(block_name(l, "cross_norm"), ones(d), false);
    params_.add(block_name(l, "cross_attn.q"), matrix(d, d, std_in), true);
    params_.add(block_name(l, "cross_attn.o"), matrix(d, d, std_out), true);
    params_.add(block_name(l, "self_norm"), ones(d), false);
    for (const char* w : {"q", "k", "v"}) {
      params_.add(block_name(l, std::string("self_attn.") + w), matrix(d, d, std_in), true);
    }
    params_.add(block_name(l, "self_attn.o"), matrix(d, d, std_out), true);
    params_.add(block_name(l, "ffn_norm"), ones(d), false);
    if (cfg_.layer_uses_moe(l)) {
      const MoeConfig& m = *cfg_.moe;
      const std::size_t im = cfg_.moe_width();
      params_.add(block_name(l, "moe.router"), matrix(d, m.n_routed, std_in), true);
      auto expert = [&](const std::string& prefix) {
        params_.add(block_name(l, prefix + ".gate"), matrix(d, im, std_in), true);
        params_.add(block_name(l, prefix + ".up"), matrix(d, im, std_in), true);
        params_.add(block_name(l, prefix + ".down"), matrix(im, d, std_out), true);
      };
      for (std::size_t e = 0; e < m.n_routed; ++e) expert("moe.expert." + std::to_string(e));
      for (std::size_t s = 0; s < m.n_shared; ++s) expert("moe.shared." + std::to_string(s));
      router_bias_[l] = std::vector<double>(m.n_routed, 0.0);
    } else {
      const std::size_t im = cfg_.ffn_width();
      params_.add(block_name(l, "ffn.gate"), matrix(d, im, std_in), true);
      params_.add(block_name(l, "ffn.up"), matrix(d, im, std_in), true);
      params_.add(block_name(l, "ffn.down"), matrix(im, d, std_out), true);
    }
  }

  for (std::size_t i = 0; i < 3; ++i) {
    params_.add("head." + std::to_string(i) + ".norm", ones(d), false);
    params_.add("head." + std::to_string(i) + ".proj", matrix(d, v, std_in), true);
  }
}

void LazyDecoder::check_items(const std::vector<SemanticItem>& items) const {
  if (items.empty()) throw std::invalid_argument("empty item batch");
  for (const auto& it : items) {
    if (it.s1 >= cfg_.vocab || it.s2 >= cfg_.vocab || it.s3 >= cfg_.vocab) {
      throw std::out_of_range("semantic item " + to_string(it) + " outside codebook of size " +
                              std::to_string(cfg_.vocab));
    }
  }
}

Var LazyDecoder::embed_targets(const std::vector<SemanticItem>& items) const {
  check_items(items);
  std::vector<std::size_t> ids;
  ids.reserve(items.size() * 3);
  for (const auto& it : items) {
    ids.push_back(0);
    ids.push_back(1 + it.s1);
    ids.push_back(1 + cfg_.vocab + it.s2);
  }
  Var h = ad::embedding_lookup(p("embed"), ids, {items.size(), 3});
  return ad::add(h, p("target_pos"));
}

SharedKVSet LazyDecoder::context_process(const Array& context) const {
  const std::size_t d_in = cfg_.context_input_dim ? cfg_.context_input_dim : cfg_.d_context();
  if (context.rank() != 3 || context.dim(1) != cfg_.context_len || context.dim(2) != d_in) {
    throw std::invalid_argument("context_process: expected [B, " +
                                std::to_string(cfg_.context_len) + ", " + std::to_string(d_in) +
                                "], got " + shape_to_string(context.shape()));
  }
  const std::size_t b = context.dim(0), n = cfg_.context_len, w = cfg_.kv_width();
  Var x = ad::constant(context);
  if (cfg_.context_input_dim) x = ad::matmul(x, p("ctx.in_proj"));
  x = ad::add(x, p("ctx.pos"));

  auto chunk = [&](std::size_t c, const std::string& gain) {
    Var part = cfg_.s_kv * cfg_.l_kv == 1 ? x : ad::slice(x, 2, c * w, (c + 1) * w);
    Var normed = ad::rmsnorm(part, p(gain), cfg_.rmsnorm_eps);
    return ad::reshape(normed, {b, n, cfg_.g_kv, cfg_.d_head});
  };

  SharedKVSet kv;
  for (std::size_t l = 0; l < cfg_.l_kv; ++l) {
    Var k = chunk(l * cfg_.s_kv, "ctx.k_norm." + std::to_string(l));
    Var v = cfg_.s_kv == 2 ? chunk(l * cfg_.s_kv + 1, "ctx.v_norm." + std::to_string(l)) : k;
    kv.pairs.emplace_back(std::move(k), std::move(v));
  }
  return kv;
}

Var LazyDecoder::cross_attention(const Var& x, std::size_t layer, const SharedKVSet& kv) const {
  const auto& [k, v] = kv.pairs.at(kv_layer_index(layer, cfg_));
  return layers::lazy_cross_attention(x, k, v, p(block_name(layer, "cross_attn.q")),
                                      p(block_name(layer, "cross_attn.o")), cfg_);
}

Var LazyDecoder::self_attention(const Var& x, std::size_t layer) const {
  return layers::causal_self_attention(
      x, p(block_name(layer, "self_attn.q")), p(block_name(layer, "self_attn.k")),
      p(block_name(layer, "self_attn.v")), p(block_name(layer, "self_attn.o")), cfg_);
}

MoeWeights LazyDecoder::moe_weights(std::size_t layer) const {
  if (!cfg_.layer_uses_moe(layer)) {
    throw std::invalid_argument("layer " + std::to_string(layer) + " is not an MoE layer");
  }
  MoeWeights w;
  w.router = p(block_name(layer, "moe.router"));
  auto expert = [&](const std::string& prefix) {
    return std::array<Var, 3>{p(block_name(layer, prefix + ".gate")),
                              p(block_name(layer, prefix + ".up")),
                              p(block_name(layer, prefix + ".down"))};
  };
  for (std::size_t e = 0; e < cfg_.moe->n_routed; ++e) {
    w.experts.push_back(expert("moe.expert." + std::to_string(e)));
  }
  for (std::size_t s = 0; s < cfg_.moe->n_shared; ++s) {
    w.shared.push_back(expert("moe.shared." + std::to_string(s)));
  }
  return w;
}

Var LazyDecoder::feed_forward(const Var& x, std::size_t layer, DecoderTrace* trace) const {
  if (!cfg_.layer_uses_moe(layer)) {
    return layers::gated_ffn(x, p(block_name(layer, "ffn.gate")), p(block_name(layer, "ffn.up")),
                             p(block_name(layer, "ffn.down")));
  }
  MoeOutput out = layers::moe_ffn(x, moe_weights(layer), router_bias_.at(layer), cfg_.moe->top_k);
  if (trace) trace->expert_loads[layer] = out.loads;
  return out.output;
}

DecoderTrace LazyDecoder::forward(const std::vector<SemanticItem>& items,
                                  const SharedKVSet& kv) const {
  if (kv.pairs.size() != cfg_.l_kv) {
    throw std::invalid_argument("forward: key/value set has " + std::to_string(kv.pairs.size()) +
                                " layers, config expects " + std::to_string(cfg_.l_kv));
  }
  DecoderTrace trace;
  const double eps = cfg_.rmsnorm_eps;
  Var h = embed_targets(items);
  if (kv.pairs[0].first.shape()[0] != items.size()) {
    throw std::invalid_argument("forward: context batch does not match item batch");
  }
  trace.hidden.push_back(h);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    trace.kv_key.push_back(kv.pairs[kv_layer_index(l, cfg_)].first.node());
    h = ad::add(h, cross_attention(ad::rmsnorm(h, p(block_name(l, "cross_norm")), eps), l, kv));
    h = ad::add(h, self_attention(ad::rmsnorm(h, p(block_name(l, "self_norm")), eps), l));
    h = ad::add(h, feed_forward(ad::rmsnorm(h, p(block_name(l, "ffn_norm")), eps), l, &trace));
    trace.hidden.push_back(h);
  }
  const std::size_t b = items.size(), d = cfg_.d_model;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string head = "head." + std::to_string(i);
    Var hi = ad::reshape(ad::slice(h, 1, i, i + 1), {b, d});
    trace.logits[i] = ad::matmul(ad::rmsnorm(hi, p(head + ".norm"), eps), p(head + ".proj"));
    trace.probs[i] = ad::softmax(trace.logits[i]);
  }
  return trace;
}

void LazyDecoder::update_router_biases(const DecoderTrace& trace) {
  for (const auto& [layer, loads] : trace.expert_loads) {
    update_router_bias(router_bias_.at(layer), loads, cfg_.router_bias_rate);
  }
}

Var gen_loss(const DecoderTrace& trace, const std::vector<SemanticItem>& items) {
  Var total;
  for (std::size_t i = 0; i < 3; ++i) {
    if (trace.logits[i].shape()[0] != items.size()) {
      throw std::invalid_argument("gen_loss: trace batch does not match items");
    }
    std::vector<std::size_t> targets;
    targets.reserve(items.size());
    for (const auto& it : items) targets.push_back(it[i]);
    Var ce = ad::cross_entropy(trace.logits[i], targets);
    total = total.defined() ? ad::add(total, ce) : ce;
  }
  return ad::scale(total, 1.0 / 3.0);
}

ParameterBreakdown count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model, v = cfg.vocab, dc = cfg.d_context();
  ParameterBreakdown pb;
  pb.embeddings = (1 + 2 * v) * d + 3 * d;
  pb.context_processor = cfg.context_input_dim * dc + cfg.context_len * dc +
                         cfg.l_kv * cfg.s_kv * cfg.kv_width();
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    pb.norms += 3 * d;
    pb.cross_attention += 2 * d * d;
    pb.self_attention += 4 * d * d;
    if (cfg.layer_uses_moe(l)) {
      const MoeConfig& m = *cfg.moe;
      pb.ffn += d * m.n_routed + (m.n_routed + m.n_shared) * 3 * d * cfg.moe_width();
    } else {
      pb.ffn += 3 * d * cfg.ffn_width();
    }
  }
  pb.norms += 3 * d;
  pb.output_heads = 3 * d * v;
  return pb;
}

}  // namespace lazyrec
