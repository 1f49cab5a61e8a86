#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lazyrec/array.hpp"
#include "lazyrec/lazy_model.hpp"
#include "lazyrec/reward_shaping.hpp"

namespace lazyrec {

struct WorldConfig {
  std::uint64_t seed = 7;
  std::size_t n_users = 64;
  std::size_t n_items = 1024;
  std::size_t vocab = 16;
  std::size_t quality_dim = 4;  // semantic IDs quantize coordinates 0, 1, 2
  double pref_scale = 1.0;
  double duration_log_mean = 3.4011973816621555;  // ln 30 s
  double duration_log_std = 1.0;
  double watch_noise = 1.0;
  // P(neg) = neg_max_prob * sigmoid(neg_sharpness * (neg_threshold - affinity)).
  double neg_max_prob = 0.05;
  double neg_threshold = -1.0;
  double neg_sharpness = 2.0;
  double exposure_temperature = 0.5;  // behavior policy: softmax(affinity / T)
  std::size_t context_len = 8;        // 1 static token + recent history
  std::size_t context_dim = 8;        // token width delivered to the model
  double sampling_ratio = 1.0;        // share of impressions emitted as samples
  std::size_t max_history = 256;      // per-user records retained by the simulator

  void validate() const;
  std::size_t raw_dim() const { return quality_dim + 4; }
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

struct CatalogItem {
  std::size_t id = 0;
  SemanticItem sid;
  double duration = 1.0;
  std::vector<double> quality;
};

struct Catalog {
  std::vector<CatalogItem> items;
  std::map<SemanticItem, std::size_t> by_sid;

  std::optional<std::size_t> find(const SemanticItem& sid) const;
};

struct UserModel {
  std::uint64_t id = 0;
  std::vector<double> preference;
};

// Hierarchical balanced quantizer: level i splits each parent group into V
// contiguous ranks of quality coordinate i. Items with equal level-0
// coordinates always share s1. Throws when n > V^3 or a group overflows.
std::vector<SemanticItem> assign_semantic_ids(const std::vector<std::vector<double>>& quality,
                                              std::size_t vocab);

class World {
 public:
  explicit World(WorldConfig cfg);

  const WorldConfig& config() const { return cfg_; }
  const Catalog& catalog() const { return catalog_; }
  const std::vector<UserModel>& users() const { return users_; }

  double affinity(std::uint64_t user, std::size_t item) const;
  double negative_probability(double affinity) const;

  // playing_time = d * sigmoid(affinity + noise); neg drawn per
  // negative_probability.
  InteractionRecord simulate_feedback(std::uint64_t user, std::size_t item, std::mt19937_64& rng,
                                      std::uint64_t ts, Source source = Source::traditional,
                                      std::optional<std::array<double, 3>> behavior_prob = {}) const;

  // Item drawn from the behavior policy softmax(affinity / T).
  std::size_t sample_exposure(std::uint64_t user, std::mt19937_64& rng) const;
  std::vector<double> exposure_distribution(std::uint64_t user) const;

  // [context_len, context_dim]: static user token then the most recent
  // records of `history` (oldest first), zero-padded.
  Array context_tokens(std::uint64_t user, const std::vector<InteractionRecord>& history) const;

  nlohmann::json snapshot() const;

 private:
  std::vector<double> raw_static(std::uint64_t user) const;
  std::vector<double> raw_history(const InteractionRecord& r) const;

  WorldConfig cfg_;
  Catalog catalog_;
  std::vector<UserModel> users_;
  std::vector<double> feature_map_;  // [raw_dim, context_dim]
};

// Global-clock impression generator under the behavior policy.
class Simulator {
 public:
  Simulator(const World& world, std::uint64_t seed);

  const World& world() const { return *world_; }
  std::mt19937_64& rng() { return rng_; }
  std::uint64_t now() const { return tick_; }

  std::uint64_t sample_user();
  // Shows `item` to `user`, records the feedback in the user's history.
  InteractionRecord expose(std::uint64_t user, std::size_t item, Source source = Source::traditional,
                           std::optional<std::array<double, 3>> behavior_prob = {});
  // A random user sees a behavior-policy item.
  InteractionRecord next_impression();

  const std::vector<InteractionRecord>& history(std::uint64_t user) const;
  Array context_for(std::uint64_t user) const;

 private:
  const World* world_;
  std::mt19937_64 rng_;
  std::uint64_t tick_ = 0;
  std::vector<std::vector<InteractionRecord>> history_;
};

enum class Organization { naive_impression, user_centric, newest_only };

std::string to_string(Organization o);
Organization parse_organization(const std::string& name);

// Indices refer to the record log passed to organize().
struct TrainingSample {
  std::uint64_t user = 0;
  std::vector<std::size_t> context;
  std::vector<std::size_t> targets;
  std::uint64_t ts = 0;  // emission time
};

std::vector<TrainingSample> organize(const std::vector<InteractionRecord>& log, Organization mode);

// Samples with some loss target at or before the newest context record.
std::size_t count_leakage(const std::vector<TrainingSample>& samples,
                          const std::vector<InteractionRecord>& log);

// How many times each (previous record, next record) transition of a user's
// sequence is trained across all samples.
std::map<std::pair<std::size_t, std::size_t>, std::size_t> transition_counts(
    const std::vector<TrainingSample>& samples, const std::vector<InteractionRecord>& log);

struct Batch {
  std::vector<SemanticItem> items;
  Array context;  // [batch, context_len, context_dim]
  std::vector<InteractionRecord> records;
  std::vector<std::uint64_t> emitted_at;
};

// Infinite, seeded stream of training batches from simulated impressions.
class BatchStream {
 public:
  BatchStream(const World& world, Organization mode, std::size_t batch, std::uint64_t seed);
  Batch next();

 private:
  struct Pending {
    std::uint64_t user;
    InteractionRecord target;
    std::vector<InteractionRecord> context;
    std::uint64_t emitted_at;
  };
  void refill();

  Organization mode_;
  std::size_t batch_;
  Simulator sim_;
  std::bernoulli_distribution keep_;
  std::deque<Pending> pending_;
};

}  // namespace lazyrec
