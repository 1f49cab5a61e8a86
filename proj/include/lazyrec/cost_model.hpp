#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lazyrec/model_config.hpp"

namespace lazyrec {

enum class ArchKind { enc_dec, naive_dec, lazy_dec };

std::string to_string(ArchKind kind);

// Parameter-count level description of an architecture, as used by the
// closed-form estimates. Parameter counts are absolute (not billions).
struct ArchSpec {
  ArchKind kind = ArchKind::lazy_dec;
  std::string label;
  double enc_params = 0.0;
  double dec_params = 0.0;
  double cross_kv_fraction = 0.1;  // share of decoder params in cross-attention K/V
  std::size_t n_layers = 0;        // per stack
  std::size_t d_model = 0;
  double context_len = 0.0;        // N
  double compression = 5.0;        // k: impressions sharing one context
  double target_len = 3.0;
  std::size_t batch = 1;

  void validate() const;
};

// GFLOPs are per training sample (forward + backward, factor 6 per
// parameter-token). Activation and KV memory counts are for the whole batch.
struct CostReport {
  double context_encoding_gflops = 0.0;
  double target_decoding_gflops = 0.0;
  double total_gflops = 0.0;
  double target_proportion = 1.0;
  double attention_score_flops = 0.0;  // per sample, training, excluded from total
  double activation_count = 0.0;
  double kv_memory_elems = 0.0;
  double forward_macs = 0.0;  // whole batch, forward only; exact model cost only

  double gflops_with_attention() const { return total_gflops + attention_score_flops / 1e9; }
};

CostReport flops_enc_dec(const ArchSpec& spec);
CostReport flops_naive_dec(const ArchSpec& spec);
CostReport flops_lazy(const ArchSpec& spec);
CostReport estimate(const ArchSpec& spec);  // dispatches on kind

// (encoder side, decoder side) training FLOPs of attention scores:
// 6 L (N/k)^2 d_model and 6 L * target_len * N * d_model.
std::pair<double, double> attention_score_flops(const ArchSpec& spec);

// Walks the LazyDecoder module graph. `compression` divides context_len to
// give the per-item effective context (1 = no shared-context amortization).
CostReport exact_model_cost(const ModelConfig& cfg, std::size_t batch, double compression = 1.0);

// Per-module forward multiply-accumulates for one sample.
struct MacInventory {
  double context_projection = 0.0;
  double cross_attention_proj = 0.0;  // Q and O
  double self_attention_proj = 0.0;
  double ffn = 0.0;
  double attention_scores = 0.0;      // QK^T and PV, cross and self
  double output_heads = 0.0;
  double total() const {
    return context_projection + cross_attention_proj + self_attention_proj + ffn +
           attention_scores + output_heads;
  }
};
MacInventory mac_inventory(const ModelConfig& cfg, double effective_context);

// Encoder-decoder, naive decoder-only and lazy decoder-only at 1B total
// parameters and context length N.
std::vector<ArchSpec> comparison_specs(double context_len);

// The encoder-decoder of comparison_specs: 9 + 9 layers, d_model 1792, k 5.
ArchSpec enc_dec_reference_spec(double context_len);

// Rounds a GFLOP value the way the comparison tables display it: integers
// as-is, values below 10 to one decimal, larger values to whole numbers.
std::string format_gflops(double gflops);
std::string format_percent(double proportion);

struct ReportRow {
  ArchSpec spec;
  CostReport cost;
};

std::vector<ReportRow> evaluate(const std::vector<ArchSpec>& specs);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_markdown(const std::vector<ReportRow>& rows);

// Exact-cost rows for named configurations.
struct ExactRow {
  std::string label;
  ModelConfig config;
  CostReport cost;
};
std::string exact_report_csv(const std::vector<ExactRow>& rows);
std::string exact_report_markdown(const std::vector<ExactRow>& rows);

// The 1B reference model with the L_kv/S_kv/G_kv variants of the ablation
// tables, evaluated at batch 512 and compression 5.
std::vector<ExactRow> ablation_rows();

}  // namespace lazyrec
