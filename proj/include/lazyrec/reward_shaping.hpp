#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lazyrec/lazy_model.hpp"

namespace lazyrec {

enum class Source { onerec, traditional };

struct InteractionRecord {
  std::uint64_t user_id = 0;
  SemanticItem item;
  double duration = 1.0;      // seconds, > 0
  double playing_time = 0.0;  // seconds, >= 0
  bool neg = false;
  Source source = Source::traditional;
  std::optional<std::array<double, 3>> behavior_prob;  // per-token, onerec only
  std::uint64_t ts = 0;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

void to_json(nlohmann::json& j, const InteractionRecord& r);
void from_json(const nlohmann::json& j, InteractionRecord& r);

std::vector<InteractionRecord> read_interactions(std::istream& in);
void write_interactions(std::ostream& out, const std::vector<InteractionRecord>& records);

struct RewardConfig {
  double beta = 2.0;
  double eps = 1e-6;
  std::size_t window = 256;  // most recent records kept per user
};

void to_json(nlohmann::json& j, const RewardConfig& c);
void from_json(const nlohmann::json& j, RewardConfig& c);

// floor(log_beta(d + eps)); negative for sub-second durations.
std::int64_t bucket_index(double d, double beta, double eps);

// Playing times grouped by duration bucket, each bucket kept sorted.
struct BucketedHistory {
  std::map<std::int64_t, std::vector<double>> buckets;
  void insert(std::int64_t bucket, double playing_time);
};

BucketedHistory build_history(const std::vector<InteractionRecord>& records, double beta,
                              double eps);

// Fraction of the same-bucket history with playing time <= p; nullopt when
// the bucket is empty.
std::optional<double> percentile_rank(const BucketedHistory& history, double d, double p,
                                      double beta, double eps);

// (k+1)-th largest present q with k = floor(n/4); +inf if none present.
double batch_threshold(const std::vector<std::optional<double>>& qs);

// -1 if neg; +1 if q present, q > tau and not neg; else 0.
int assign_advantage(std::optional<double> q, double tau, bool neg);

struct ShapedSample {
  std::optional<double> q;
  int advantage = 0;
};

// Keeps a sliding per-user history and scores batches against it. Each
// record is ranked only against records observed before its batch.
class RewardShaper {
 public:
  explicit RewardShaper(RewardConfig cfg);

  const RewardConfig& config() const { return cfg_; }
  std::optional<double> score(const InteractionRecord& r) const;
  void observe(const InteractionRecord& r);

  // Scores the batch, derives tau_B over it, assigns advantages, then adds
  // the batch to the history.
  std::vector<ShapedSample> shape_batch(const std::vector<InteractionRecord>& batch);

  BucketedHistory history_of(std::uint64_t user) const;

 private:
  RewardConfig cfg_;
  std::unordered_map<std::uint64_t, std::deque<InteractionRecord>> history_;
};

}  // namespace lazyrec
