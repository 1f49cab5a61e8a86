#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "lazyrec/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> steps;
  std::optional<std::string> arm;
  std::optional<std::string> method;
};

nlohmann::json read_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw lazyrec::ConfigError("cannot read config file " + path);
  try {
    return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw lazyrec::ConfigError("config " + path + ": " + e.what());
  }
}

// Precedence: file < environment < command-line flags.
lazyrec::ExperimentConfig resolve(const Options& o, const std::string& command) {
  nlohmann::json j = read_json(o.config);
  lazyrec::apply_env_overrides(j, lazyrec::current_environment());
  if (o.seed) j["seed"] = *o.seed;
  if (o.out) j["out"] = *o.out;
  if (o.steps) j[command == "rl" ? "rl" : "train"]["steps"] = *o.steps;
  if (o.arm) j["rl"]["arm"] = *o.arm;
  if (o.method) j["rl"]["objective"]["method"] = *o.method;
  auto cfg = j.get<lazyrec::ExperimentConfig>();
  cfg.resolve();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lazy decoder-only generative recommender: training, RL and cost tools"};
  app.set_version_flag("--version", lazyrec::version_string());
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Experiment seed");
    sub->add_option("--out", opt.out, "Output run directory");
  };

  auto* pretrain = app.add_subcommand("pretrain", "Minimize the generation loss on the simulator");
  add_common(pretrain);
  pretrain->add_option("--steps", opt.steps, "Override train.steps");

  auto* rl = app.add_subcommand("rl", "Feedback-driven policy optimization");
  add_common(rl);
  rl->add_option("--steps", opt.steps, "Override rl.steps");
  rl->add_option("--arm", opt.arm, "Sample source")
      ->check(CLI::IsMember({"traditional_only", "with_onerec"}));
  rl->add_option("--method", opt.method, "Objective")->check(CLI::IsMember({"gbpo", "ecpo", "grpo_clip"}));

  auto* cost = app.add_subcommand("cost", "FLOPs, activation and KV-memory reports");
  add_common(cost);

  auto* sweep = app.add_subcommand("sweep", "One pretraining run per value of sweep.axis");
  add_common(sweep);
  sweep->add_option("--steps", opt.steps, "Override train.steps");

  auto* dump = app.add_subcommand("dump-world", "Write the simulated world and an impression log");
  add_common(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version arrive here too, with exit code 0
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (pretrain->parsed()) {
      const auto cfg = resolve(opt, "pretrain");
      const auto r = lazyrec::cmd_pretrain(cfg);
      std::cout << "pretrain: " << r.steps_done << " steps, final loss " << lazyrec::fmt(r.final_loss)
                << ", eval loss " << lazyrec::fmt(r.final_eval_loss) << " -> " << cfg.out << '\n';
    } else if (rl->parsed()) {
      const auto cfg = resolve(opt, "rl");
      const auto r = lazyrec::cmd_rl(cfg);
      std::cout << "rl: " << r.grad_norms.size() << " steps (" << lazyrec::to_string(cfg.rl.arm)
                << ", " << lazyrec::to_string(cfg.rl.objective.method) << ") -> " << cfg.out << '\n';
    } else if (cost->parsed()) {
      lazyrec::cmd_cost(resolve(opt, "cost"));
    } else if (sweep->parsed()) {
      const auto cfg = resolve(opt, "sweep");
      const std::size_t failed = lazyrec::cmd_sweep(cfg);
      std::cout << "sweep: " << cfg.sweep.values.size() - failed << "/" << cfg.sweep.values.size()
                << " points completed -> " << cfg.out << '\n';
      if (failed) return 1;
    } else if (dump->parsed()) {
      const auto cfg = resolve(opt, "dump-world");
      lazyrec::cmd_dump_world(cfg);
      std::cout << "world written to " << cfg.out << '\n';
    }
  } catch (const lazyrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lazyrec::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
