#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "lazyrec/reward_shaping.hpp"

using namespace lazyrec;

namespace {

InteractionRecord record(std::uint64_t user, double d, double p, bool neg = false,
                         std::uint64_t ts = 0) {
  InteractionRecord r;
  r.user_id = user;
  r.duration = d;
  r.playing_time = p;
  r.neg = neg;
  r.ts = ts;
  return r;
}

// Direct transcription: bucket every duration, then count.
std::optional<double> naive_rank(const std::vector<std::pair<double, double>>& hist, double d,
                                 double p, double beta, double eps) {
  const auto b = static_cast<std::int64_t>(std::floor(std::log(d + eps) / std::log(beta)));
  std::size_t n = 0, le = 0;
  for (const auto& [hd, hp] : hist) {
    const auto hb = static_cast<std::int64_t>(std::floor(std::log(hd + eps) / std::log(beta)));
    if (hb != b) continue;
    ++n;
    if (hp <= p) ++le;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(le) / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("reward") {
  TEST_CASE("bucket index") {
    CHECK(bucket_index(8.0, 2.0, 1e-6) == 3);
    CHECK(bucket_index(0.0, 2.0, 1e-6) == -20);
    CHECK(bucket_index(2.0, 2.0, 1e-6) == 1);
    CHECK(bucket_index(3.0, 2.0, 1e-6) == 1);
    // d + eps landing exactly on beta^k belongs to bucket k; anything below to k - 1
    CHECK(bucket_index(8.0 - 1e-6, 2.0, 1e-6) == 3);
    CHECK(bucket_index(8.0 - 2e-6, 2.0, 1e-6) == 2);
    CHECK(bucket_index(1000.0 - 1e-6, 10.0, 1e-6) == 3);
    CHECK(bucket_index(1000.0 - 1e-5, 10.0, 1e-6) == 2);
    CHECK(bucket_index(1e6, 10.0, 1e-300) == 6);
    CHECK_THROWS_AS(bucket_index(1.0, 1.0, 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(bucket_index(-1.0, 2.0, 1e-6), std::invalid_argument);
  }

  TEST_CASE("bucket index agrees with floor of log at exact powers") {
    for (int k = -20; k <= 40; ++k) {
      const double d = std::ldexp(1.0, k);
      CHECK(bucket_index(d, 2.0, 1e-300) == k);
      CHECK(bucket_index(std::nextafter(d, 0.0), 2.0, 1e-300) == k - 1);
    }
  }

  TEST_CASE("history and percentile rank") {
    CHECK(build_history({}, 2.0, 1e-6).buckets.empty());
    BucketedHistory h = build_history({record(1, 2, 5), record(1, 3, 5)}, 2.0, 1e-6);
    REQUIRE(h.buckets.size() == 1);
    CHECK(h.buckets.at(1).size() == 2);

    std::vector<InteractionRecord> recs;
    for (double p : {10.0, 20.0, 30.0, 40.0}) recs.push_back(record(1, 100.0, p));
    h = build_history(recs, 2.0, 1e-6);
    CHECK(*percentile_rank(h, 100.0, 30.0, 2.0, 1e-6) == 0.75);
    CHECK(*percentile_rank(h, 100.0, 5.0, 2.0, 1e-6) == 0.0);
    CHECK(*percentile_rank(h, 100.0, 40.0, 2.0, 1e-6) == 1.0);
    CHECK(*percentile_rank(h, 110.0, 40.0, 2.0, 1e-6) == 1.0);  // same bucket [64, 128)
    CHECK_FALSE(percentile_rank(h, 10.0, 40.0, 2.0, 1e-6).has_value());
  }

  TEST_CASE("percentile rank matches the naive oracle on random instances") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dur(0.0, 300.0);
    std::uniform_int_distribution<int> coarse(0, 20);
    for (int inst = 0; inst < 10000; ++inst) {
      const double beta = inst % 3 == 0 ? 2.0 : inst % 3 == 1 ? 1.5 : 10.0;
      const std::size_t n = rng() % 40;
      std::vector<std::pair<double, double>> hist;
      std::vector<InteractionRecord> recs;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = dur(rng);
        const double p = coarse(rng);  // coarse values produce ties
        hist.emplace_back(d, p);
        recs.push_back(record(0, d, p));
      }
      const double d = dur(rng), p = coarse(rng) + (rng() % 2 ? 0.5 : 0.0);
      BucketedHistory h = build_history(recs, beta, 1e-6);
      CAPTURE(inst);
      CHECK(percentile_rank(h, d, p, beta, 1e-6) == naive_rank(hist, d, p, beta, 1e-6));
    }
  }

  TEST_CASE("rank is monotone in playing time") {
    std::vector<InteractionRecord> recs;
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> e(0.1);
    for (int i = 0; i < 200; ++i) recs.push_back(record(0, 50.0, e(rng)));
    BucketedHistory h = build_history(recs, 2.0, 1e-6);
    double prev = -1.0;
    for (double p = 0.0; p < 80.0; p += 0.25) {
      const double q = *percentile_rank(h, 50.0, p, 2.0, 1e-6);
      CHECK(q >= prev);
      prev = q;
    }
  }

  TEST_CASE("batch threshold") {
    CHECK(batch_threshold({0.9, 0.5, 0.3, 0.1}) == 0.5);
    CHECK(batch_threshold({0.95, 0.9, 0.8, 0.6, 0.5, 0.4, 0.2, 0.1}) == 0.8);
    CHECK(batch_threshold({0.4, 0.4, 0.4}) == 0.4);
    CHECK(batch_threshold({std::nullopt, 0.2, std::nullopt}) == 0.2);
    CHECK(std::isinf(batch_threshold({std::nullopt})));
    CHECK(std::isinf(batch_threshold({})));
  }

  TEST_CASE("advantage assignment") {
    CHECK(assign_advantage(0.9, 0.5, false) == 1);
    CHECK(assign_advantage(0.99, 0.5, true) == -1);
    CHECK(assign_advantage(std::nullopt, 0.0, false) == 0);
    CHECK(assign_advantage(std::nullopt, 0.0, true) == -1);
    CHECK(assign_advantage(0.5, 0.5, false) == 0);
  }

  TEST_CASE("exactly a quarter of distinct q values are positive") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n = 1; n <= 200; ++n) {
      std::vector<std::optional<double>> qs;
      for (std::size_t i = 0; i < n; ++i) qs.push_back(u(rng));
      const double tau = batch_threshold(qs);
      std::size_t pos = 0;
      for (const auto& q : qs) pos += assign_advantage(q, tau, false) == 1;
      CHECK(pos == n / 4);
    }
  }

  TEST_CASE("shaper ranks each record against strictly earlier history") {
    RewardShaper shaper(RewardConfig{});
    auto first = shaper.shape_batch({record(1, 20, 5), record(1, 20, 15)});
    CHECK_FALSE(first[0].q.has_value());  // no earlier records
    CHECK_FALSE(first[1].q.has_value());
    CHECK(first[0].advantage == 0);

    std::vector<InteractionRecord> batch;
    for (double p : {1.0, 10.0, 16.0, 20.0}) batch.push_back(record(1, 20, p));
    batch.push_back(record(2, 20, 100.0, true));
    auto out = shaper.shape_batch(batch);
    CHECK(*out[0].q == 0.0);
    CHECK(*out[1].q == 0.5);
    CHECK(*out[2].q == 1.0);
    CHECK(*out[3].q == 1.0);
    CHECK(out[4].advantage == -1);
    // qs = {0, .5, 1, 1}: k = 1, tau = 1, nothing strictly above
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i].advantage == 0);
    CHECK(shaper.history_of(1).buckets.at(4).size() == 6);
  }

  TEST_CASE("history window keeps the most recent records") {
    RewardConfig cfg;
    cfg.window = 3;
    RewardShaper shaper(cfg);
    for (double p : {1.0, 2.0, 3.0, 4.0, 5.0}) shaper.observe(record(7, 30, p));
    CHECK(shaper.history_of(7).buckets.at(4) == std::vector<double>{3.0, 4.0, 5.0});
  }

  TEST_CASE("record validation and JSONL round trip") {
    CHECK_THROWS_AS(record(1, 0.0, 1.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(record(1, 1.0, -1.0).validate(), std::invalid_argument);
    InteractionRecord onerec = record(3, 12.5, 4.25, false, 9);
    onerec.source = Source::onerec;
    CHECK_THROWS_AS(onerec.validate(), std::invalid_argument);  // needs behavior_prob
    onerec.behavior_prob = std::array<double, 3>{0.5, 0.25, 0.125};
    onerec.item = {1, 2, 3};
    onerec.validate();

    std::stringstream io;
    write_interactions(io, {onerec, record(4, 3, 1, true, 10)});
    auto back = read_interactions(io);
    REQUIRE(back.size() == 2);
    CHECK(back[0].item == onerec.item);
    CHECK(back[0].behavior_prob == onerec.behavior_prob);
    CHECK(back[0].playing_time == 4.25);
    CHECK(back[1].neg);
    CHECK(back[1].source == Source::traditional);

    std::stringstream bad("{\"user_id\": 1, \"duration\": -3}\n");
    CHECK_THROWS(read_interactions(bad));
  }

  TEST_CASE("reward config validation") {
    nlohmann::json j = {{"beta", 1.0}};
    CHECK_THROWS(j.get<RewardConfig>());
    j = {{"beta", 3.0}, {"eps", 1e-3}, {"window", 10}};
    RewardConfig c = j.get<RewardConfig>();
    CHECK(c.beta == 3.0);
    CHECK(c.window == 10);
  }
}
