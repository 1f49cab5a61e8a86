#include "lazyrec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "lazyrec/beam_search.hpp"
#include "lazyrec/checkpoint.hpp"
#include "lazyrec/cost_model.hpp"
#include "lazyrec/lazy_model.hpp"

extern char** environ;

namespace lazyrec {

namespace fs = std::filesystem;

namespace {

// Offsets that decorrelate the generator streams derived from one seed.
constexpr std::uint64_t kStreamSalt = 1000003;
constexpr std::uint64_t kEvalSalt = 2000003;
constexpr std::uint64_t kRlSalt = 3000017;

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
    }
  }
}

ad::Var loss_on(const LazyDecoder& model, const Batch& b, DecoderTrace* trace_out = nullptr) {
  DecoderTrace trace = model.forward(b.items, model.context_process(b.context));
  ad::Var loss = gen_loss(trace, b.items);
  if (trace_out) *trace_out = std::move(trace);
  return loss;
}

std::uint64_t rl_stream_seed(const ExperimentConfig& cfg) { return cfg.seed + kRlSalt; }

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = nlohmann::json{{"steps", t.steps},
                     {"batch", t.batch},
                     {"beta1", t.beta1},
                     {"beta2", t.beta2},
                     {"weight_decay", t.weight_decay},
                     {"grad_clip", t.grad_clip},
                     {"organization", to_string(t.organization)},
                     {"eval_every", t.eval_every},
                     {"eval_size", t.eval_size}};
  j["lr"] = t.lr ? nlohmann::json(*t.lr) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainConfig& t) {
  reject_unknown(j, {"steps", "batch", "lr", "beta1", "beta2", "weight_decay", "grad_clip",
                     "organization", "eval_every", "eval_size"},
                 "train");
  t.steps = j.value("steps", t.steps);
  t.batch = j.value("batch", t.batch);
  if (j.contains("lr") && !j.at("lr").is_null()) t.lr = j.at("lr").get<double>();
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.grad_clip = j.value("grad_clip", t.grad_clip);
  if (j.contains("organization")) {
    t.organization = parse_organization(j.at("organization").get<std::string>());
  }
  t.eval_every = j.value("eval_every", t.eval_every);
  t.eval_size = j.value("eval_size", t.eval_size);
}

void to_json(nlohmann::json& j, const RlConfig& r) {
  j = nlohmann::json{{"objective", r.objective},
                     {"reward", r.reward},
                     {"arm", to_string(r.arm)},
                     {"steps", r.steps},
                     {"users_per_step", r.users_per_step},
                     {"group_size", r.group_size},
                     {"beam", r.beam},
                     {"lr", r.lr},
                     {"grad_clip", r.grad_clip},
                     {"warmup_impressions", r.warmup_impressions},
                     {"serving_refresh", r.serving_refresh},
                     {"checkpoint", r.checkpoint}};
}

void from_json(const nlohmann::json& j, RlConfig& r) {
  reject_unknown(j, {"objective", "reward", "arm", "steps", "users_per_step", "group_size", "beam",
                     "lr", "grad_clip", "warmup_impressions", "serving_refresh", "checkpoint"},
                 "rl");
  if (j.contains("objective")) r.objective = j.at("objective").get<ObjectiveConfig>();
  if (j.contains("reward")) r.reward = j.at("reward").get<RewardConfig>();
  if (j.contains("arm")) r.arm = parse_arm(j.at("arm").get<std::string>());
  r.steps = j.value("steps", r.steps);
  r.users_per_step = j.value("users_per_step", r.users_per_step);
  r.group_size = j.value("group_size", r.group_size);
  r.beam = j.value("beam", r.beam);
  r.lr = j.value("lr", r.lr);
  r.grad_clip = j.value("grad_clip", r.grad_clip);
  r.warmup_impressions = j.value("warmup_impressions", r.warmup_impressions);
  r.serving_refresh = j.value("serving_refresh", r.serving_refresh);
  r.checkpoint = j.value("checkpoint", r.checkpoint);
}

std::string version_string() {
#ifndef LAZYREC_VERSION
#define LAZYREC_VERSION "0.0.0"
#endif
#ifndef LAZYREC_GIT_DESCRIBE
#define LAZYREC_GIT_DESCRIBE "unknown"
#endif
  return std::string("lazyrec ") + LAZYREC_VERSION + " (" + LAZYREC_GIT_DESCRIBE + ")";
}

std::string to_string(Arm a) {
  return a == Arm::with_onerec ? "with_onerec" : "traditional_only";
}

Arm parse_arm(const std::string& name) {
  if (name == "with_onerec") return Arm::with_onerec;
  if (name == "traditional_only") return Arm::traditional_only;
  throw ConfigError("unknown arm '" + name + "' (expected traditional_only or with_onerec)");
}

void ExperimentConfig::resolve() {
  model.validate();
  sim.vocab = model.vocab;
  sim.context_len = model.context_len;
  sim.context_dim = model.context_input_dim ? model.context_input_dim : model.d_context();
  if (sim.seed == 0) sim.seed = seed;
  sim.max_history = std::max(sim.max_history, sim.context_len);
  sim.validate();
  if (train.batch == 0) throw ConfigError("train.batch must be >= 1");
  if (train.eval_every == 0) throw ConfigError("train.eval_every must be >= 1");
  if (train.eval_size == 0) throw ConfigError("train.eval_size must be >= 1");
  if (!(train.grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (train.lr && !(*train.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  rl.objective.validate();
  nlohmann::json reward = rl.reward;
  reward.get_to(rl.reward);
  if (rl.users_per_step == 0 || rl.group_size == 0) {
    throw ConfigError("rl.users_per_step and rl.group_size must be >= 1");
  }
  if (rl.serving_refresh == 0) {
    throw ConfigError("rl.serving_refresh must be >= 1");
  }
  if (rl.beam == 0) throw ConfigError("rl.beam must be >= 1");
  if (!(rl.lr > 0.0)) throw ConfigError("rl.lr must be > 0");
  if (out.empty()) throw ConfigError("out must name a directory");
  for (double n : cost_context_lens) {
    if (!(n >= 0.0)) throw ConfigError("cost.context_lens must be >= 0");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"out", c.out},
                     {"model", c.model},
                     {"sim", c.sim},
                     {"train", c.train},
                     {"rl", c.rl},
                     {"sweep", {{"axis", c.sweep.axis}, {"values", c.sweep.values}}},
                     {"cost", {{"context_lens", c.cost_context_lens}}},
                     {"dump", {{"impressions", c.dump_impressions}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    reject_unknown(j, {"seed", "out", "model", "sim", "train", "rl", "sweep", "cost", "dump"},
                   "<top level>");
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    c.sim.seed = 0;
    if (j.contains("sim")) c.sim = j.at("sim").get<WorldConfig>();
    if (!j.contains("sim") || !j.at("sim").contains("seed")) c.sim.seed = 0;
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("rl")) c.rl = j.at("rl").get<RlConfig>();
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      reject_unknown(s, {"axis", "values"}, "sweep");
      c.sweep.axis = s.value("axis", c.sweep.axis);
      c.sweep.values = s.value("values", c.sweep.values);
    }
    if (j.contains("cost")) {
      reject_unknown(j.at("cost"), {"context_lens"}, "cost");
      c.cost_context_lens = j.at("cost").value("context_lens", c.cost_context_lens);
    }
    if (j.contains("dump")) {
      reject_unknown(j.at("dump"), {"impressions"}, "dump");
      c.dump_impressions = j.at("dump").value("impressions", c.dump_impressions);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

void apply_env_overrides(nlohmann::json& j, const std::vector<std::string>& entries,
                         const std::string& prefix) {
  for (const auto& entry : entries) {
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(prefix.size(), eq - prefix.size());
    const std::string raw = entry.substr(eq + 1);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (key.empty()) continue;
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto sep = key.find("__", start);
      const std::string part = key.substr(start, sep == std::string::npos ? sep : sep - start);
      if (part.empty()) throw ConfigError("malformed override variable '" + entry + "'");
      if (!node->is_object()) *node = nlohmann::json::object();
      if (sep == std::string::npos) {
        nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
        (*node)[part] = value.is_discarded() ? nlohmann::json(raw) : value;
        break;
      }
      node = &(*node)[part];
      start = sep + 2;
    }
  }
}

std::vector<std::string> current_environment() {
  std::vector<std::string> out;
  for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  apply_env_overrides(j, current_environment());
  ExperimentConfig c = j.get<ExperimentConfig>();
  c.resolve();
  return c;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::trunc), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("CSV row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
  out_.flush();
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void prepare_run_dir(const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << nlohmann::json(cfg).dump(2) << '\n';
  std::ofstream(dir / "seed") << cfg.seed << '\n';
  std::ofstream(dir / "version") << version_string() << '\n';
}

const std::vector<std::string> kPretrainColumns = {"step", "loss", "eval_loss", "flops",
                                                   "grad_norm"};
const std::vector<std::string> kRlColumns = {
    "step",          "loss",          "grad_norm",         "prob_grad_norm",
    "neg_prob_grad_norm", "clamp_count", "mean_ratio",     "positive_fraction",
    "negative_fraction",  "mean_q",      "mean_play_ratio"};

// --- pretrain --------------------------------------------------------------------

PretrainResult cmd_pretrain(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.out;
  prepare_run_dir(dir, cfg);
  const World world(cfg.sim);
  LazyDecoder model(cfg.model, cfg.seed);
  AdamWConfig oc;
  oc.lr = cfg.train.lr.value_or(cfg.model.lr);
  oc.beta1 = cfg.train.beta1;
  oc.beta2 = cfg.train.beta2;
  oc.weight_decay = cfg.train.weight_decay;
  AdamW opt(model.params(), oc);

  BatchStream stream(world, cfg.train.organization, cfg.train.batch, cfg.seed + kStreamSalt);
  const Batch eval = BatchStream(world, Organization::newest_only, cfg.train.eval_size,
                                 cfg.seed + kEvalSalt)
                         .next();
  PretrainResult result;
  result.gflops_per_sample = exact_model_cost(cfg.model, 1).gflops_with_attention();
  const double flops_per_step = result.gflops_per_sample * 1e9 * static_cast<double>(cfg.train.batch);

  CsvWriter csv(dir / "metrics.csv", kPretrainColumns);
  const fs::path ckpt = dir / "checkpoint.bin";
  for (std::size_t step = 1; step <= cfg.train.steps; ++step) {
    const Batch b = stream.next();
    DecoderTrace trace;
    double loss = 0.0, grad_norm = 0.0;
    try {
      ad::Var l = loss_on(model, b, &trace);
      loss = l.item();
      ad::backward(l);
      grad_norm = cfg.train.grad_clip > 0.0 ? clip_grad_norm(model.params(), cfg.train.grad_clip)
                                            : global_grad_norm(model.params());
      if (!std::isfinite(grad_norm)) throw std::domain_error("non-finite gradient norm");
    } catch (const std::domain_error& e) {
      save_model(ckpt, model);
      throw NumericalError("step " + std::to_string(step) + ": " + e.what() +
                           "; last good checkpoint kept at " + ckpt.string());
    }
    opt.step();
    opt.zero_grad();
    model.update_router_biases(trace);

    std::string eval_cell;
    if (step % cfg.train.eval_every == 0 || step == cfg.train.steps) {
      ad::NoGradGuard no_grad;
      result.final_eval_loss = loss_on(model, eval).item();
      eval_cell = fmt(result.final_eval_loss);
    }
    csv.row({std::to_string(step), fmt(loss), eval_cell,
             fmt(flops_per_step * static_cast<double>(step)), fmt(grad_norm)});
    result.final_loss = loss;
    result.steps_done = step;
  }
  if (cfg.train.steps == 0) {
    ad::NoGradGuard no_grad;
    result.final_eval_loss = loss_on(model, eval).item();
  }
  save_model(ckpt, model);
  return result;
}

// --- rl --------------------------------------------------------------------------

RlResult cmd_rl(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.out;
  prepare_run_dir(dir, cfg);
  const World world(cfg.sim);
  LazyDecoder model = cfg.rl.checkpoint.empty() ? LazyDecoder(cfg.model, cfg.seed)
                                                : load_model(cfg.rl.checkpoint);
  if (!(model.config() == cfg.model)) {
    throw ConfigError("checkpoint " + cfg.rl.checkpoint + " was trained with a different model config");
  }
  AdamWConfig oc;
  oc.lr = cfg.rl.lr;
  oc.beta1 = cfg.train.beta1;
  oc.beta2 = cfg.train.beta2;
  oc.weight_decay = cfg.train.weight_decay;
  AdamW opt(model.params(), oc);
  // Exposures come from the serving copy, re-synced every serving_refresh steps.
  LazyDecoder serving(cfg.model, cfg.seed);

  Simulator sim(world, rl_stream_seed(cfg));
  RewardShaper shaper(cfg.rl.reward);
  for (std::size_t i = 0; i < cfg.rl.warmup_impressions; ++i) shaper.observe(sim.next_impression());

  const auto& wc = world.config();
  const std::size_t per_ctx = wc.context_len * wc.context_dim;
  const std::size_t m = cfg.rl.users_per_step * cfg.rl.group_size;
  const double floor = cfg.rl.objective.prob_floor;

  CsvWriter csv(dir / "metrics.csv", kRlColumns);
  RlResult result;
  for (std::size_t step = 1; step <= cfg.rl.steps; ++step) {
    if ((step - 1) % cfg.rl.serving_refresh == 0) restore(serving, snapshot(model));
    std::vector<InteractionRecord> records;
    std::vector<SemanticItem> items;
    Array context(Shape{m, wc.context_len, wc.context_dim});
    for (std::size_t g = 0; g < cfg.rl.users_per_step; ++g) {
      const std::uint64_t user = sim.sample_user();
      const Array ctx = sim.context_for(user);
      std::vector<std::pair<std::size_t, std::array<double, 3>>> candidates;
      std::vector<double> weights;
      if (cfg.rl.arm == Arm::with_onerec) {
        Array one = ctx.reshaped({1, wc.context_len, wc.context_dim});
        const SharedKVSet kv = [&] {
          ad::NoGradGuard no_grad;
          return serving.context_process(one);
        }();
        for (const auto& h : beam_generate(serving, kv, cfg.rl.beam)) {
          if (auto idx = world.catalog().find(h.item)) {
            std::array<double, 3> p = h.token_probs;
            for (double& x : p) x = std::max(x, floor);
            candidates.push_back({*idx, p});
            weights.push_back(std::exp(h.log_prob));
          }
        }
      }
      for (std::size_t k = 0; k < cfg.rl.group_size; ++k) {
        InteractionRecord r;
        if (!candidates.empty()) {
          std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
          const auto& [item, probs] = candidates[pick(sim.rng())];
          r = sim.expose(user, item, Source::onerec, probs);
        } else {
          r = sim.expose(user, world.sample_exposure(user, sim.rng()));
        }
        const std::size_t row = records.size();
        std::copy(ctx.ptr(), ctx.ptr() + per_ctx, context.ptr() + row * per_ctx);
        items.push_back(r.item);
        records.push_back(r);
      }
    }

    const auto shaped = shaper.shape_batch(records);
    std::vector<std::optional<double>> old(3 * m);
    std::vector<double> adv(3 * m);
    std::size_t positives = 0, negatives = 0, with_q = 0;
    double q_sum = 0.0, play_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t = 0; t < 3; ++t) {
        adv[3 * i + t] = shaped[i].advantage;
        if (records[i].behavior_prob) old[3 * i + t] = (*records[i].behavior_prob)[t];
      }
      positives += shaped[i].advantage > 0;
      negatives += shaped[i].advantage < 0;
      if (shaped[i].q) {
        q_sum += *shaped[i].q;
        ++with_q;
      }
      play_sum += records[i].playing_time / records[i].duration;
    }
    const bool any_signal = positives + negatives > 0;

    double loss = 0.0, grad_norm = 0.0, prob_grad_norm = 0.0, neg_prob_grad_norm = 0.0;
    double mean_ratio = 0.0;
    std::size_t clamps = 0;
    try {
      DecoderTrace trace = model.forward(items, model.context_process(context));
      ad::Var probs = sequence_prob(trace, items);
      PolicyBatch batch{probs, old, adv};
      ObjectiveResult obj = policy_loss(batch, cfg.rl.objective);
      loss = obj.loss.item();
      clamps = obj.clamp_count;
      mean_ratio = obj.mean_ratio;
      if (any_signal) {
        ad::backward(obj.loss);
        const Array pg = probs.grad();
        double sq = 0.0, neg_sq = 0.0;
        for (std::size_t j = 0; j < pg.size(); ++j) {
          sq += pg[j] * pg[j];
          if (adv[j] < 0.0) neg_sq += pg[j] * pg[j];
        }
        prob_grad_norm = std::sqrt(sq);
        neg_prob_grad_norm = std::sqrt(neg_sq);
        grad_norm = cfg.rl.grad_clip > 0.0 ? clip_grad_norm(model.params(), cfg.rl.grad_clip)
                                           : global_grad_norm(model.params());
        if (!std::isfinite(grad_norm)) throw std::domain_error("non-finite gradient norm");
      }
    } catch (const std::domain_error& e) {
      save_model(dir / "checkpoint.bin", model);
      throw NumericalError("rl step " + std::to_string(step) + ": " + e.what());
    }
    // Steps without any non-zero advantage carry no learning signal; skipping
    // them keeps weight decay from moving the parameters.
    if (any_signal) opt.step();
    opt.zero_grad();

    const double mean_q = with_q ? q_sum / static_cast<double>(with_q)
                                 : std::numeric_limits<double>::quiet_NaN();
    const double md = static_cast<double>(m);
    csv.row({std::to_string(step), fmt(loss), fmt(grad_norm), fmt(prob_grad_norm), fmt(neg_prob_grad_norm),
             std::to_string(clamps), fmt(mean_ratio), fmt(positives / md), fmt(negatives / md),
             fmt(mean_q), fmt(play_sum / md)});
    result.grad_norms.push_back(grad_norm);
    result.prob_grad_norms.push_back(prob_grad_norm);
    result.neg_prob_grad_norms.push_back(neg_prob_grad_norm);
    result.mean_q.push_back(mean_q);
    result.clamp_total += clamps;
  }
  save_model(dir / "checkpoint.bin", model);
  return result;
}

// --- cost ------------------------------------------------------------------------

void cmd_cost(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.out;
  prepare_run_dir(dir, cfg);
  std::vector<ArchSpec> specs;
  for (double n : cfg.cost_context_lens) {
    for (auto& s : comparison_specs(n)) specs.push_back(s);
  }
  const auto rows = evaluate(specs);
  std::ofstream(dir / "comparison.csv") << report_csv(rows);
  std::ofstream(dir / "comparison.md") << report_markdown(rows);

  {
    CsvWriter csv(dir / "attention_scores.csv",
                  {"layers", "d_model", "compression", "encoder_kflops_per_n2",
                   "decoder_kflops_per_n"});
    ArchSpec unit = enc_dec_reference_spec(1.0);
    auto [enc, dec] = attention_score_flops(unit);
    csv.row({std::to_string(unit.n_layers), std::to_string(unit.d_model), fmt(unit.compression),
             fmt(enc / 1e3), fmt(dec / 1e3)});
  }

  const auto ablation = ablation_rows();
  std::ofstream(dir / "ablation.csv") << exact_report_csv(ablation);
  std::ofstream(dir / "ablation.md") << exact_report_markdown(ablation);

  {
    CsvWriter csv(dir / "parameters.csv",
                  {"model", "nominal", "counted", "relative_error", "gflops_per_sample"});
    for (const auto& r : reference_models()) {
      const ModelConfig c = r.config();
      const double counted = static_cast<double>(count_parameters(c).total());
      csv.row({r.name, fmt(r.nominal_params), fmt(counted),
               fmt(counted / r.nominal_params - 1.0),
               fmt(exact_model_cost(c, 1, 5.0).gflops_with_attention())});
    }
  }
  std::cout << report_markdown(rows) << '\n' << exact_report_markdown(ablation);
}

// --- sweep -----------------------------------------------------------------------

std::size_t cmd_sweep(const ExperimentConfig& cfg) {
  static const std::set<std::string> axes = {"l_kv", "s_kv", "g_kv", "model_size"};
  if (!axes.count(cfg.sweep.axis)) {
    throw ConfigError("unknown sweep axis '" + cfg.sweep.axis +
                      "' (expected l_kv, s_kv, g_kv or model_size)");
  }
  if (cfg.sweep.values.empty()) throw ConfigError("sweep.values is empty");
  const fs::path dir = cfg.out;
  prepare_run_dir(dir, cfg);
  CsvWriter summary(dir / "summary.csv",
                    {"axis", "value", "status", "final_eval_loss", "gflops_per_sample",
                     "kv_memory_elems", "parameters"});
  CsvWriter curves(dir / "curves.csv", {"axis", "value", "step", "flops", "loss", "eval_loss"});
  std::size_t failures = 0;
  for (std::size_t v : cfg.sweep.values) {
    const std::string tag = cfg.sweep.axis + "_" + std::to_string(v);
    ExperimentConfig point = cfg;
    point.out = (dir / tag).string();
    try {
      ModelConfig& m = point.model;
      if (cfg.sweep.axis == "l_kv") m.l_kv = v;
      if (cfg.sweep.axis == "s_kv") m.s_kv = v;
      if (cfg.sweep.axis == "g_kv") m.g_kv = v;
      if (cfg.sweep.axis == "model_size") {
        m.d_model = v;
        m.d_head = m.n_heads ? v / m.n_heads : 0;
      }
      point.resolve();
      const PretrainResult r = cmd_pretrain(point);
      const CostReport cost = exact_model_cost(point.model, point.train.batch);
      summary.row({cfg.sweep.axis, std::to_string(v), "ok", fmt(r.final_eval_loss),
                   fmt(r.gflops_per_sample), fmt(cost.kv_memory_elems),
                   std::to_string(count_parameters(point.model).total())});
      std::ifstream in(fs::path(point.out) / "metrics.csv");
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        cells.resize(kPretrainColumns.size());
        curves.row({cfg.sweep.axis, std::to_string(v), cells[0], cells[3], cells[1], cells[2]});
      }
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "sweep point " << tag << " failed: " << e.what() << '\n';
      summary.row({cfg.sweep.axis, std::to_string(v), "failed", "", "", "", ""});
    }
  }
  return failures;
}

// --- dump-world ------------------------------------------------------------------

void cmd_dump_world(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.out;
  prepare_run_dir(dir, cfg);
  const World world(cfg.sim);
  std::ofstream(dir / "world.json") << world.snapshot().dump() << '\n';
  Simulator sim(world, cfg.seed + kStreamSalt);
  std::vector<InteractionRecord> log;
  log.reserve(cfg.dump_impressions);
  for (std::size_t i = 0; i < cfg.dump_impressions; ++i) log.push_back(sim.next_impression());
  std::ofstream out(dir / "impressions.jsonl");
  write_interactions(out, log);
}

}  // namespace lazyrec
