#include "lazyrec/reward_shaping.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lazyrec {

void InteractionRecord::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("interaction duration must be > 0");
  }
  if (!(playing_time >= 0.0) || !std::isfinite(playing_time)) {
    throw std::invalid_argument("interaction playing_time must be >= 0");
  }
  if (behavior_prob.has_value() != (source == Source::onerec)) {
    throw std::invalid_argument("behavior_prob must be present exactly for onerec records");
  }
  if (behavior_prob) {
    for (double p : *behavior_prob) {
      if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("behavior_prob outside (0, 1]");
    }
  }
}

void to_json(nlohmann::json& j, const InteractionRecord& r) {
  j = nlohmann::json{{"user_id", r.user_id},
                     {"s1", r.item.s1},
                     {"s2", r.item.s2},
                     {"s3", r.item.s3},
                     {"duration", r.duration},
                     {"playing_time", r.playing_time},
                     {"neg", r.neg ? 1 : 0},
                     {"source", r.source == Source::onerec ? "onerec" : "traditional"},
                     {"ts", r.ts}};
  if (r.behavior_prob) j["behavior_prob"] = *r.behavior_prob;
}

void from_json(const nlohmann::json& j, InteractionRecord& r) {
  r.user_id = j.at("user_id").get<std::uint64_t>();
  r.item = {j.at("s1").get<std::uint32_t>(), j.at("s2").get<std::uint32_t>(),
            j.at("s3").get<std::uint32_t>()};
  r.duration = j.at("duration").get<double>();
  r.playing_time = j.at("playing_time").get<double>();
  r.neg = j.at("neg").get<int>() != 0;
  const std::string source = j.at("source").get<std::string>();
  if (source == "onerec") {
    r.source = Source::onerec;
  } else if (source == "traditional") {
    r.source = Source::traditional;
  } else {
    throw std::invalid_argument("unknown interaction source '" + source + "'");
  }
  r.behavior_prob.reset();
  if (j.contains("behavior_prob") && !j.at("behavior_prob").is_null()) {
    r.behavior_prob = j.at("behavior_prob").get<std::array<double, 3>>();
  }
  r.ts = j.value("ts", std::uint64_t{0});
  r.validate();
}

std::vector<InteractionRecord> read_interactions(std::istream& in) {
  std::vector<InteractionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<InteractionRecord>());
    } catch (const std::exception& e) {
      throw std::invalid_argument("interaction log line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  return out;
}

void write_interactions(std::ostream& out, const std::vector<InteractionRecord>& records) {
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

void to_json(nlohmann::json& j, const RewardConfig& c) {
  j = nlohmann::json{{"beta", c.beta}, {"eps", c.eps}, {"window", c.window}};
}

void from_json(const nlohmann::json& j, RewardConfig& c) {
  c.beta = j.value("beta", c.beta);
  c.eps = j.value("eps", c.eps);
  c.window = j.value("window", c.window);
  if (!(c.beta > 1.0)) throw ConfigError("reward beta must be > 1");
  if (!(c.eps > 0.0)) throw ConfigError("reward eps must be > 0");
  if (c.window == 0) throw ConfigError("reward window must be >= 1");
}

std::int64_t bucket_index(double d, double beta, double eps) {
  if (!(beta > 1.0)) throw std::invalid_argument("bucket_index: beta must be > 1");
  if (!(eps > 0.0)) throw std::invalid_argument("bucket_index: eps must be > 0");
  if (!(d >= 0.0)) throw std::invalid_argument("bucket_index: duration must be >= 0");
  const double x = d + eps;
  auto b = static_cast<std::int64_t>(std::floor(std::log(x) / std::log(beta)));
  // The division can land a hair off an exact power; settle on the integer
  // satisfying beta^b <= x < beta^(b+1).
  while (std::pow(beta, static_cast<double>(b)) > x) --b;
  while (std::pow(beta, static_cast<double>(b + 1)) <= x) ++b;
  return b;
}

void BucketedHistory::insert(std::int64_t bucket, double playing_time) {
  auto& v = buckets[bucket];
  v.insert(std::upper_bound(v.begin(), v.end(), playing_time), playing_time);
}

BucketedHistory build_history(const std::vector<InteractionRecord>& records, double beta,
                              double eps) {
  BucketedHistory h;
  if (records.empty()) return h;
  const std::uint64_t user = records.front().user_id;
  for (const auto& r : records) {
    if (r.user_id != user) throw std::invalid_argument("build_history: records span several users");
    h.insert(bucket_index(r.duration, beta, eps), r.playing_time);
  }
  return h;
}

std::optional<double> percentile_rank(const BucketedHistory& history, double d, double p,
                                      double beta, double eps) {
  auto it = history.buckets.find(bucket_index(d, beta, eps));
  if (it == history.buckets.end() || it->second.empty()) return std::nullopt;
  const auto& v = it->second;
  const auto at_most = std::upper_bound(v.begin(), v.end(), p) - v.begin();
  return static_cast<double>(at_most) / static_cast<double>(v.size());
}

double batch_threshold(const std::vector<std::optional<double>>& qs) {
  std::vector<double> present;
  for (const auto& q : qs) {
    if (q) present.push_back(*q);
  }
  if (present.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t k = present.size() / 4;
  std::nth_element(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(k),
                   present.end(), std::greater<>());
  return present[k];
}

int assign_advantage(std::optional<double> q, double tau, bool neg) {
  if (neg) return -1;
  if (q && *q > tau) return 1;
  return 0;
}

RewardShaper::RewardShaper(RewardConfig cfg) : cfg_(cfg) {
  nlohmann::json j = cfg_;
  j.get_to(cfg_);  // validates
}

BucketedHistory RewardShaper::history_of(std::uint64_t user) const {
  BucketedHistory h;
  auto it = history_.find(user);
  if (it == history_.end()) return h;
  for (const auto& r : it->second) h.insert(bucket_index(r.duration, cfg_.beta, cfg_.eps), r.playing_time);
  return h;
}

std::optional<double> RewardShaper::score(const InteractionRecord& r) const {
  auto it = history_.find(r.user_id);
  if (it == history_.end()) return std::nullopt;
  const std::int64_t b = bucket_index(r.duration, cfg_.beta, cfg_.eps);
  std::size_t total = 0, at_most = 0;
  for (const auto& h : it->second) {
    if (bucket_index(h.duration, cfg_.beta, cfg_.eps) != b) continue;
    ++total;
    if (h.playing_time <= r.playing_time) ++at_most;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(at_most) / static_cast<double>(total);
}

void RewardShaper::observe(const InteractionRecord& r) {
  auto& h = history_[r.user_id];
  h.push_back(r);
  while (h.size() > cfg_.window) h.pop_front();
}

std::vector<ShapedSample> RewardShaper::shape_batch(const std::vector<InteractionRecord>& batch) {
  std::vector<ShapedSample> out(batch.size());
  std::vector<std::optional<double>> qs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) qs[i] = out[i].q = score(batch[i]);
  const double tau = batch_threshold(qs);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i].advantage = assign_advantage(out[i].q, tau, batch[i].neg);
  }
  for (const auto& r : batch) observe(r);
  return out;
}

}  // namespace lazyrec
