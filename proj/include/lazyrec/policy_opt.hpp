#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lazyrec/lazy_model.hpp"

namespace lazyrec {

enum class Method { gbpo, ecpo, grpo_clip };

std::string to_string(Method m);
Method parse_method(const std::string& name);

struct ObjectiveConfig {
  Method method = Method::gbpo;
  double clip_eps = 0.2;
  double delta = 0.1;        // ECPO slack
  double prob_floor = 1e-8;  // pi_theta is clamped from below inside objectives

  void validate() const;
};

void to_json(nlohmann::json& j, const ObjectiveConfig& c);
void from_json(const nlohmann::json& j, ObjectiveConfig& c);

// Token-level RL samples. `probs` holds pi_theta per token (any shape, M
// elements, differentiable); the other vectors are indexed the same way.
// A missing old probability marks an off-policy sample, whose pi_old is
// taken as sg(pi_theta).
struct PolicyBatch {
  ad::Var probs;
  std::vector<std::optional<double>> old_probs;
  std::vector<double> advantages;

  std::size_t size() const { return advantages.size(); }
  void validate() const;
};

struct ObjectiveResult {
  ad::Var loss;
  std::size_t clamp_count = 0;  // tokens whose pi_theta hit the floor
  double mean_ratio = 0.0;      // mean of pi_theta / effective denominator
};

// Stop-gradient values default to the current probabilities. Tests pass
// `frozen` to hold them fixed while probing with finite differences.
using Frozen = std::optional<std::vector<double>>;

// A >= 0: max(pi_old, sg(pi)); A < 0: max(pi_old, 1 - sg(pi)).
double effective_old_prob_gbpo(double sg_pi, std::optional<double> pi_old, double advantage);
// max(sg(pi) / (1 + eps + delta), pi_old)
double effective_old_prob_ecpo(double sg_pi, std::optional<double> pi_old, double eps,
                               double delta);

ObjectiveResult gbpo_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                          const Frozen& frozen = std::nullopt);
ObjectiveResult ecpo_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                          const Frozen& frozen = std::nullopt);
ObjectiveResult grpo_clip_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                               const Frozen& frozen = std::nullopt);
ObjectiveResult policy_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                            const Frozen& frozen = std::nullopt);

// Mean of -[y log p + (1 - y) log(1 - p)]; p must lie in (0, 1).
ad::Var bce_loss(const ad::Var& p, const std::vector<int>& labels);

struct GradientBoundRow {
  double pi = 0.0;
  double gbpo = 0.0;       // |dL/dpi| for an off-policy negative
  double bce = 0.0;        // |dL/dpi| of BCE with y = 0
  double grpo_clip = 0.0;  // |dL/dpi| of the clipped surrogate at ratio 1
};

// Evaluates the three coefficients by differentiating each objective on a
// single-token batch at every grid point.
std::vector<GradientBoundRow> gradient_bound_check(const std::vector<double>& grid,
                                                   const ObjectiveConfig& cfg = {});

// [B, 3]: p(s1), p(s2 | s1), p(s3 | s1, s2) of each item under the trace.
ad::Var sequence_prob(const DecoderTrace& trace, const std::vector<SemanticItem>& items);

}  // namespace lazyrec
