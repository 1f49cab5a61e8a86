#include "lazyrec/cost_model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lazyrec {

namespace {

constexpr double kGiga = 1e9;

double proportion(double target, double total) { return total > 0.0 ? target / total : 1.0; }

void finish(CostReport& r) {
  r.total_gflops = r.context_encoding_gflops + r.target_decoding_gflops;
  r.target_proportion = proportion(r.target_decoding_gflops, r.total_gflops);
}

void require_kind(const ArchSpec& spec, ArchKind kind, const char* fn) {
  spec.validate();
  if (spec.kind != kind) {
    throw std::invalid_argument(std::string(fn) + ": spec is " + to_string(spec.kind));
  }
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::enc_dec: return "enc_dec";
    case ArchKind::naive_dec: return "naive_dec";
    case ArchKind::lazy_dec: return "lazy_dec";
  }
  return "unknown";
}

void ArchSpec::validate() const {
  if (enc_params < 0.0 || dec_params < 0.0) throw ConfigError("parameter counts must be >= 0");
  if (compression < 1.0) throw ConfigError("compression k must be >= 1");
  if (context_len < 0.0 || target_len < 0.0) throw ConfigError("lengths must be >= 0");
  if (cross_kv_fraction < 0.0 || cross_kv_fraction > 1.0) {
    throw ConfigError("cross_kv_fraction must lie in [0, 1]");
  }
  if (kind == ArchKind::lazy_dec && cross_kv_fraction != 0.0) {
    throw ConfigError("lazy decoder has no cross-attention K/V projections");
  }
  if (batch == 0) throw ConfigError("batch must be >= 1");
}

CostReport flops_enc_dec(const ArchSpec& spec) {
  require_kind(spec, ArchKind::enc_dec, "flops_enc_dec");
  const double per_item = spec.context_len / spec.compression;
  const double kv_params = spec.cross_kv_fraction * spec.dec_params;
  CostReport r;
  r.context_encoding_gflops = 6.0 * (spec.enc_params + kv_params) * per_item / kGiga;
  r.target_decoding_gflops = 6.0 * (spec.dec_params - kv_params) * spec.target_len / kGiga;
  auto [enc, dec] = attention_score_flops(spec);
  r.attention_score_flops = enc + dec;
  finish(r);
  return r;
}

CostReport flops_naive_dec(const ArchSpec& spec) {
  require_kind(spec, ArchKind::naive_dec, "flops_naive_dec");
  const double params = spec.enc_params + spec.dec_params;
  CostReport r;
  r.context_encoding_gflops = 6.0 * params * (spec.context_len / spec.compression) / kGiga;
  r.target_decoding_gflops = 6.0 * params * spec.target_len / kGiga;
  // One causal stack over N/k + target tokens.
  const double tokens = spec.context_len / spec.compression + spec.target_len;
  r.attention_score_flops =
      6.0 * static_cast<double>(spec.n_layers) * tokens * tokens * static_cast<double>(spec.d_model);
  finish(r);
  return r;
}

CostReport flops_lazy(const ArchSpec& spec) {
  require_kind(spec, ArchKind::lazy_dec, "flops_lazy");
  const double params = spec.enc_params + spec.dec_params;
  CostReport r;
  r.context_encoding_gflops = 0.0;
  r.target_decoding_gflops = 6.0 * params * spec.target_len / kGiga;
  r.attention_score_flops = attention_score_flops(spec).second;
  finish(r);
  return r;
}

CostReport estimate(const ArchSpec& spec) {
  switch (spec.kind) {
    case ArchKind::enc_dec: return flops_enc_dec(spec);
    case ArchKind::naive_dec: return flops_naive_dec(spec);
    case ArchKind::lazy_dec: return flops_lazy(spec);
  }
  throw std::invalid_argument("unknown architecture kind");
}

std::pair<double, double> attention_score_flops(const ArchSpec& spec) {
  const double l = static_cast<double>(spec.n_layers);
  const double d = static_cast<double>(spec.d_model);
  const double per_item = spec.context_len / spec.compression;
  return {6.0 * l * per_item * per_item * d, 6.0 * l * spec.target_len * spec.context_len * d};
}

MacInventory mac_inventory(const ModelConfig& cfg, double effective_context) {
  cfg.validate();
  const double d = static_cast<double>(cfg.d_model);
  const double t = 3.0;
  const double n = effective_context;
  const double hd = static_cast<double>(cfg.n_heads * cfg.d_head);
  MacInventory m;
  m.context_projection = n * static_cast<double>(cfg.context_input_dim * cfg.d_context());
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    m.cross_attention_proj += t * (d * hd + hd * d);
    m.self_attention_proj += t * (3.0 * d * hd + hd * d);
    if (cfg.layer_uses_moe(l)) {
      const MoeConfig& moe = *cfg.moe;
      const double active = static_cast<double>(moe.top_k + moe.n_shared);
      m.ffn += t * (d * static_cast<double>(moe.n_routed) +
                    active * 3.0 * d * static_cast<double>(cfg.moe_width()));
    } else {
      m.ffn += t * 3.0 * d * static_cast<double>(cfg.ffn_width());
    }
    // Scores and weighted sums: every query head against N context keys, and
    // the full 3x3 self-attention product (masking happens after the matmul).
    m.attention_scores += 2.0 * t * n * hd + 2.0 * t * t * hd;
  }
  m.output_heads = t * d * static_cast<double>(cfg.vocab);
  return m;
}

CostReport exact_model_cost(const ModelConfig& cfg, std::size_t batch, double compression) {
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (compression < 1.0) throw ConfigError("compression k must be >= 1");
  const double n = static_cast<double>(cfg.context_len) / compression;
  const MacInventory m = mac_inventory(cfg, n);
  const double b = static_cast<double>(batch);

  CostReport r;
  r.context_encoding_gflops = 6.0 * m.context_projection / kGiga;
  r.target_decoding_gflops =
      6.0 * (m.cross_attention_proj + m.self_attention_proj + m.ffn + m.output_heads) / kGiga;
  r.attention_score_flops = 6.0 * m.attention_scores;
  r.forward_macs = b * m.total();
  finish(r);

  // Activations kept for the backward pass, per sample. The context processor
  // contributes only its normalized chunks (projection and norm are fused).
  const double d = static_cast<double>(cfg.d_model);
  const double t = 3.0;
  const double h = static_cast<double>(cfg.n_heads);
  r.kv_memory_elems = b * n * static_cast<double>(cfg.d_context());
  double per_sample = t * d;  // embeddings
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    per_sample += t * (4.0 * d + h * n);        // cross: norm, q, attention out, o
    per_sample += t * (6.0 * d + h * t);        // self: norm, q, k, v, attention out, o
    if (cfg.layer_uses_moe(l)) {
      const MoeConfig& moe = *cfg.moe;
      const double active = static_cast<double>(moe.top_k + moe.n_shared);
      per_sample += t * (d + static_cast<double>(moe.n_routed) +
                         active * (3.0 * static_cast<double>(cfg.moe_width()) + d));
    } else {
      per_sample += t * (2.0 * d + 3.0 * static_cast<double>(cfg.ffn_width()));
    }
  }
  per_sample += t * (d + static_cast<double>(cfg.vocab));  // head norms and logits
  r.activation_count = b * per_sample + r.kv_memory_elems;
  return r;
}

std::vector<ArchSpec> comparison_specs(double context_len) {
  ArchSpec enc;
  enc.kind = ArchKind::enc_dec;
  enc.label = "Encoder-Decoder (0.5B:0.5B)";
  enc.enc_params = 0.5e9;
  enc.dec_params = 0.5e9;
  enc.n_layers = 9;
  enc.d_model = 1792;
  enc.context_len = context_len;

  ArchSpec naive = enc;
  naive.kind = ArchKind::naive_dec;
  naive.label = "Naive Decoder-Only (1B)";
  naive.enc_params = 0.0;
  naive.dec_params = 1e9;
  naive.cross_kv_fraction = 0.0;
  naive.n_layers = 18;

  ArchSpec lazy = naive;
  lazy.kind = ArchKind::lazy_dec;
  lazy.label = "Lazy Decoder-Only (1B)";
  return {enc, naive, lazy};
}

ArchSpec enc_dec_reference_spec(double context_len) { return comparison_specs(context_len)[0]; }

std::string format_gflops(double gflops) {
  const double rounded = std::round(gflops);
  if (std::abs(gflops - rounded) < 1e-9) return fixed(rounded, 0);
  return gflops < 10.0 ? fixed(gflops, 1) : fixed(gflops, 0);
}

std::string format_percent(double proportion) { return fixed(100.0 * proportion, 2) + "%"; }

std::vector<ReportRow> evaluate(const std::vector<ArchSpec>& specs) {
  std::vector<ReportRow> rows;
  for (const auto& s : specs) rows.push_back({s, estimate(s)});
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "architecture,kind,context_len,total_gflops,context_gflops,target_gflops,"
         "target_proportion,attention_score_gflops\n";
  for (const auto& r : rows) {
    out << '"' << r.spec.label << "\"," << to_string(r.spec.kind) << ','
        << fixed(r.spec.context_len, 0) << ',' << fixed(r.cost.total_gflops, 4) << ','
        << fixed(r.cost.context_encoding_gflops, 4) << ','
        << fixed(r.cost.target_decoding_gflops, 4) << ','
        << fixed(r.cost.target_proportion, 6) << ','
        << fixed(r.cost.attention_score_flops / kGiga, 4) << '\n';
  }
  return out.str();
}

std::string report_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "| Architecture | N | Total (GFLOPs) | Context Encoding (GFLOPs) | "
         "Target Decoding (GFLOPs) | Target Proportion |\n"
      << "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out << "| " << r.spec.label << " | " << fixed(r.spec.context_len, 0) << " | "
        << format_gflops(r.cost.total_gflops) << " | "
        << format_gflops(r.cost.context_encoding_gflops) << " | "
        << format_gflops(r.cost.target_decoding_gflops) << " | "
        << format_percent(r.cost.target_proportion) << " |\n";
  }
  return out.str();
}

std::string exact_report_csv(const std::vector<ExactRow>& rows) {
  std::ostringstream out;
  out << "label,l_kv,s_kv,g_kv,gflops,context_gflops,target_gflops,attention_gflops,"
         "activations,kv_memory\n";
  for (const auto& r : rows) {
    out << '"' << r.label << "\"," << r.config.l_kv << ',' << r.config.s_kv << ','
        << r.config.g_kv << ',' << fixed(r.cost.gflops_with_attention(), 4) << ','
        << fixed(r.cost.context_encoding_gflops, 4) << ','
        << fixed(r.cost.target_decoding_gflops, 4) << ','
        << fixed(r.cost.attention_score_flops / kGiga, 4) << ','
        << fixed(r.cost.activation_count, 0) << ',' << fixed(r.cost.kv_memory_elems, 0) << '\n';
  }
  return out.str();
}

std::string exact_report_markdown(const std::vector<ExactRow>& rows) {
  std::ostringstream out;
  out << "| Config | L_kv | S_kv | G_kv | GFLOPs | Activations | KV Size |\n"
      << "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out << "| " << r.label << " | " << r.config.l_kv << " | " << r.config.s_kv << " | "
        << r.config.g_kv << " | " << fixed(r.cost.gflops_with_attention(), 2) << " | "
        << fixed(r.cost.activation_count / 1e9, 2) << "B | "
        << fixed(r.cost.kv_memory_elems / 1e6, 0) << "M |\n";
  }
  return out.str();
}

std::vector<ExactRow> ablation_rows() {
  const ModelConfig base = reference_model("1B").config();
  std::vector<ExactRow> rows;
  auto add = [&](std::size_t l_kv, std::size_t s_kv, std::size_t g_kv) {
    ModelConfig c = base;
    c.l_kv = l_kv;
    c.s_kv = s_kv;
    c.g_kv = g_kv;
    rows.push_back({"1B L_kv=" + std::to_string(l_kv) + " S_kv=" + std::to_string(s_kv) +
                        " G_kv=" + std::to_string(g_kv),
                    c, exact_model_cost(c, 512, 5.0)});
  };
  add(1, 1, 14);
  add(1, 2, 14);
  add(3, 1, 14);
  add(9, 1, 14);
  add(18, 1, 14);
  add(1, 1, 7);
  add(1, 1, 2);
  add(1, 1, 1);
  return rows;
}

}  // namespace lazyrec
