#include "lazyrec/policy_opt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lazyrec {

std::string to_string(Method m) {
  switch (m) {
    case Method::gbpo: return "gbpo";
    case Method::ecpo: return "ecpo";
    case Method::grpo_clip: return "grpo_clip";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "gbpo") return Method::gbpo;
  if (name == "ecpo") return Method::ecpo;
  if (name == "grpo_clip") return Method::grpo_clip;
  throw ConfigError("unknown RL method '" + name + "' (expected gbpo, ecpo or grpo_clip)");
}

void ObjectiveConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  if (!(prob_floor > 0.0 && prob_floor < 1.0)) throw ConfigError("prob_floor must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const ObjectiveConfig& c) {
  j = nlohmann::json{{"method", to_string(c.method)},
                     {"clip_eps", c.clip_eps},
                     {"delta", c.delta},
                     {"prob_floor", c.prob_floor}};
}

void from_json(const nlohmann::json& j, ObjectiveConfig& c) {
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.delta = j.value("delta", c.delta);
  c.prob_floor = j.value("prob_floor", c.prob_floor);
  c.validate();
}

void PolicyBatch::validate() const {
  if (!probs.defined()) throw std::invalid_argument("policy batch has no probabilities");
  if (probs.size() != advantages.size() || old_probs.size() != advantages.size()) {
    throw std::invalid_argument("policy batch: probs, old_probs and advantages differ in length");
  }
  if (advantages.empty()) throw std::invalid_argument("policy batch is empty");
  for (double p : probs.value().data()) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("policy probability outside [0, 1]");
  }
  for (const auto& o : old_probs) {
    if (o && !(*o > 0.0 && *o <= 1.0)) throw std::invalid_argument("old probability outside (0, 1]");
  }
}

double effective_old_prob_gbpo(double sg_pi, std::optional<double> pi_old, double advantage) {
  const double old = pi_old.value_or(sg_pi);
  return advantage >= 0.0 ? std::max(old, sg_pi) : std::max(old, 1.0 - sg_pi);
}

double effective_old_prob_ecpo(double sg_pi, std::optional<double> pi_old, double eps,
                               double delta) {
  return std::max(sg_pi / (1.0 + eps + delta), pi_old.value_or(sg_pi));
}

namespace {

struct Prepared {
  ad::Var probs;  // floored, flattened to [M]
  std::vector<double> sg;
  std::size_t clamp_count = 0;
};

Prepared prepare(const PolicyBatch& batch, const ObjectiveConfig& cfg, const Frozen& frozen) {
  cfg.validate();
  batch.validate();
  const std::size_t m = batch.size();
  Prepared p;
  for (double v : batch.probs.value().data()) {
    if (v < cfg.prob_floor) ++p.clamp_count;
  }
  p.probs = ad::max_with_constant(ad::reshape(batch.probs, {m}), cfg.prob_floor);
  if (frozen) {
    if (frozen->size() != m) throw std::invalid_argument("frozen stop-gradient values: wrong length");
    p.sg = *frozen;
  } else {
    const auto v = p.probs.value().data();
    p.sg.assign(v.begin(), v.end());
  }
  return p;
}

ad::Var negated_mean(const ad::Var& terms) { return ad::scale(ad::reduce_mean(terms), -1.0); }

// -(1/M) sum min(r A, clip(r, 1-eps, 1+eps) A) with r = pi / denom.
ObjectiveResult clipped(const Prepared& p, const PolicyBatch& batch,
                        const std::vector<double>& denom, double eps) {
  const std::size_t m = batch.size();
  Array inv(Shape{m}), adv(Shape{m}, batch.advantages);
  for (std::size_t i = 0; i < m; ++i) inv[i] = 1.0 / denom[i];
  ad::Var ratio = ad::mul(p.probs, ad::constant(inv));
  ad::Var a = ad::constant(adv);
  ad::Var surrogate =
      ad::minimum(ad::mul(ratio, a), ad::mul(ad::clamp(ratio, 1.0 - eps, 1.0 + eps), a));
  ObjectiveResult r;
  r.loss = negated_mean(surrogate);
  r.clamp_count = p.clamp_count;
  double sum = 0.0;
  for (double v : ratio.value().data()) sum += v;
  r.mean_ratio = sum / static_cast<double>(m);
  return r;
}

}  // namespace

ObjectiveResult gbpo_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                          const Frozen& frozen) {
  Prepared p = prepare(batch, cfg, frozen);
  const std::size_t m = batch.size();
  Array coef(Shape{m});
  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double denom = effective_old_prob_gbpo(p.sg[i], batch.old_probs[i], batch.advantages[i]);
    coef[i] = batch.advantages[i] / denom;
    ratio_sum += p.probs.value()[i] / denom;
  }
  ObjectiveResult r;
  r.loss = negated_mean(ad::mul(p.probs, ad::constant(coef)));
  r.clamp_count = p.clamp_count;
  r.mean_ratio = ratio_sum / static_cast<double>(m);
  return r;
}

ObjectiveResult ecpo_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                          const Frozen& frozen) {
  Prepared p = prepare(batch, cfg, frozen);
  std::vector<double> denom(batch.size());
  for (std::size_t i = 0; i < denom.size(); ++i) {
    denom[i] = effective_old_prob_ecpo(p.sg[i], batch.old_probs[i], cfg.clip_eps, cfg.delta);
  }
  return clipped(p, batch, denom, cfg.clip_eps);
}

ObjectiveResult grpo_clip_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                               const Frozen& frozen) {
  Prepared p = prepare(batch, cfg, frozen);
  std::vector<double> denom(batch.size());
  for (std::size_t i = 0; i < denom.size(); ++i) denom[i] = batch.old_probs[i].value_or(p.sg[i]);
  return clipped(p, batch, denom, cfg.clip_eps);
}

ObjectiveResult policy_loss(const PolicyBatch& batch, const ObjectiveConfig& cfg,
                            const Frozen& frozen) {
  switch (cfg.method) {
    case Method::gbpo: return gbpo_loss(batch, cfg, frozen);
    case Method::ecpo: return ecpo_loss(batch, cfg, frozen);
    case Method::grpo_clip: return grpo_clip_loss(batch, cfg, frozen);
  }
  throw std::invalid_argument("unknown method");
}

ad::Var bce_loss(const ad::Var& p, const std::vector<int>& labels) {
  if (p.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("bce_loss: probabilities and labels differ in length");
  }
  for (double v : p.value().data()) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("bce_loss: probability outside (0, 1)");
  }
  const std::size_t m = labels.size();
  Array y(Shape{m}), not_y(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("bce_loss: label not in {0, 1}");
    y[i] = labels[i];
    not_y[i] = 1 - labels[i];
  }
  ad::Var flat = ad::reshape(p, {m});
  ad::Var one_minus = ad::add_scalar(ad::scale(flat, -1.0), 1.0);
  ad::Var ll = ad::add(ad::mul(ad::constant(y), ad::log(flat)),
                       ad::mul(ad::constant(not_y), ad::log(one_minus)));
  return negated_mean(ll);
}

std::vector<GradientBoundRow> gradient_bound_check(const std::vector<double>& grid,
                                                   const ObjectiveConfig& cfg) {
  auto coefficient = [](const ad::Var& pi, const ad::Var& loss) {
    ad::backward(loss);
    return std::abs(pi.grad()[0]);
  };
  std::vector<GradientBoundRow> rows;
  rows.reserve(grid.size());
  for (double pi : grid) {
    if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("gradient_bound_check: grid outside (0, 1)");
    GradientBoundRow row;
    row.pi = pi;
    auto off_policy_negative = [&](Method m) {
      ad::Var p = ad::parameter(Array(Shape{1}, pi));
      PolicyBatch b{p, {std::nullopt}, {-1.0}};
      ObjectiveConfig c = cfg;
      c.method = m;
      return coefficient(p, policy_loss(b, c).loss);
    };
    row.gbpo = off_policy_negative(Method::gbpo);
    row.grpo_clip = off_policy_negative(Method::grpo_clip);
    ad::Var p = ad::parameter(Array(Shape{1}, pi));
    row.bce = coefficient(p, bce_loss(p, {0}));
    rows.push_back(row);
  }
  return rows;
}

ad::Var sequence_prob(const DecoderTrace& trace, const std::vector<SemanticItem>& items) {
  const std::size_t b = items.size();
  std::vector<ad::Var> cols;
  for (std::size_t pos = 0; pos < 3; ++pos) {
    if (!trace.probs[pos].defined() || trace.probs[pos].shape()[0] != b) {
      throw std::invalid_argument("sequence_prob: trace does not match items");
    }
    std::vector<std::size_t> idx(b);
    for (std::size_t i = 0; i < b; ++i) idx[i] = items[i][pos];
    cols.push_back(ad::reshape(ad::pick(trace.probs[pos], idx), {b, 1}));
  }
  return ad::concat(cols, 1);
}

}  // namespace lazyrec
