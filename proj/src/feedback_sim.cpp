#include "lazyrec/feedback_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lazyrec {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double uniform01(std::mt19937_64& rng) { return std::generate_canonical<double, 53>(rng); }

}  // namespace

void WorldConfig::validate() const {
  if (n_users == 0) throw ConfigError("sim.n_users must be >= 1");
  if (n_items == 0) throw ConfigError("sim.n_items must be >= 1");
  if (vocab < 2) throw ConfigError("sim.vocab must be >= 2");
  if (n_items > vocab * vocab * vocab) {
    throw ConfigError("sim.n_items " + std::to_string(n_items) + " exceeds V^3 = " +
                      std::to_string(vocab * vocab * vocab));
  }
  if (quality_dim < 3) throw ConfigError("sim.quality_dim must be >= 3");
  if (!(duration_log_std > 0.0)) throw ConfigError("sim.duration_log_std must be > 0");
  if (!(watch_noise >= 0.0)) throw ConfigError("sim.watch_noise must be >= 0");
  if (!(neg_max_prob >= 0.0 && neg_max_prob <= 1.0)) throw ConfigError("sim.neg_max_prob outside [0, 1]");
  if (!(exposure_temperature > 0.0)) throw ConfigError("sim.exposure_temperature must be > 0");
  if (context_len < 1) throw ConfigError("sim.context_len must be >= 1");
  if (context_dim < 1) throw ConfigError("sim.context_dim must be >= 1");
  if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0)) throw ConfigError("sim.sampling_ratio outside (0, 1]");
  if (max_history < context_len) throw ConfigError("sim.max_history must be >= context_len");
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"n_users", c.n_users},
                     {"n_items", c.n_items},
                     {"vocab", c.vocab},
                     {"quality_dim", c.quality_dim},
                     {"pref_scale", c.pref_scale},
                     {"duration_log_mean", c.duration_log_mean},
                     {"duration_log_std", c.duration_log_std},
                     {"watch_noise", c.watch_noise},
                     {"neg_max_prob", c.neg_max_prob},
                     {"neg_threshold", c.neg_threshold},
                     {"neg_sharpness", c.neg_sharpness},
                     {"exposure_temperature", c.exposure_temperature},
                     {"context_len", c.context_len},
                     {"context_dim", c.context_dim},
                     {"sampling_ratio", c.sampling_ratio},
                     {"max_history", c.max_history}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
#define LAZYREC_FIELD(name) c.name = j.value(#name, c.name)
  LAZYREC_FIELD(seed);
  LAZYREC_FIELD(n_users);
  LAZYREC_FIELD(n_items);
  LAZYREC_FIELD(vocab);
  LAZYREC_FIELD(quality_dim);
  LAZYREC_FIELD(pref_scale);
  LAZYREC_FIELD(duration_log_mean);
  LAZYREC_FIELD(duration_log_std);
  LAZYREC_FIELD(watch_noise);
  LAZYREC_FIELD(neg_max_prob);
  LAZYREC_FIELD(neg_threshold);
  LAZYREC_FIELD(neg_sharpness);
  LAZYREC_FIELD(exposure_temperature);
  LAZYREC_FIELD(context_len);
  LAZYREC_FIELD(context_dim);
  LAZYREC_FIELD(sampling_ratio);
  LAZYREC_FIELD(max_history);
#undef LAZYREC_FIELD
}

std::optional<std::size_t> Catalog::find(const SemanticItem& sid) const {
  auto it = by_sid.find(sid);
  if (it == by_sid.end()) return std::nullopt;
  return it->second;
}

std::vector<SemanticItem> assign_semantic_ids(const std::vector<std::vector<double>>& quality,
                                              std::size_t vocab) {
  const std::size_t n = quality.size();
  if (vocab == 0 || n > vocab * vocab * vocab) {
    throw std::invalid_argument("assign_semantic_ids: " + std::to_string(n) +
                                " items do not fit a codebook of size " + std::to_string(vocab));
  }
  for (const auto& q : quality) {
    if (q.size() < 3) throw std::invalid_argument("assign_semantic_ids: quality vectors need 3 coordinates");
  }
  std::vector<SemanticItem> ids(n);
  // (members, level) work items, processed breadth-first.
  std::vector<std::vector<std::size_t>> groups{std::vector<std::size_t>(n)};
  std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  for (std::size_t level = 0; level < 3; ++level) {
    const std::size_t capacity = level == 0 ? vocab * vocab : level == 1 ? vocab : 1;
    std::vector<std::vector<std::size_t>> next;
    for (auto& g : groups) {
      std::stable_sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
        return quality[a][level] < quality[b][level];
      });
      const std::size_t m = g.size();
      std::size_t begin = 0;
      for (std::size_t c = 0; c < vocab && begin < m; ++c) {
        std::size_t end = c + 1 == vocab ? m : std::max(begin, (c + 1) * m / vocab);
        if (level == 0) {
          while (end > begin && end < m && quality[g[end]][0] == quality[g[end - 1]][0]) ++end;
        }
        if (end - begin > capacity) {
          throw std::invalid_argument("assign_semantic_ids: too many items share one code prefix");
        }
        std::vector<std::size_t> child(g.begin() + static_cast<std::ptrdiff_t>(begin),
                                       g.begin() + static_cast<std::ptrdiff_t>(end));
        for (std::size_t i : child) {
          const auto code = static_cast<std::uint32_t>(c);
          if (level == 0) ids[i].s1 = code;
          if (level == 1) ids[i].s2 = code;
          if (level == 2) ids[i].s3 = code;
        }
        if (!child.empty()) next.push_back(std::move(child));
        begin = end;
      }
      if (begin < m) throw std::invalid_argument("assign_semantic_ids: codebook exhausted");
    }
    groups = std::move(next);
  }
  return ids;
}

World::World(WorldConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> quality(cfg_.n_items, std::vector<double>(cfg_.quality_dim));
  catalog_.items.resize(cfg_.n_items);
  for (std::size_t i = 0; i < cfg_.n_items; ++i) {
    for (double& q : quality[i]) q = normal(rng);
    catalog_.items[i].id = i;
    catalog_.items[i].duration =
        std::exp(cfg_.duration_log_mean + cfg_.duration_log_std * normal(rng));
  }
  const auto ids = assign_semantic_ids(quality, cfg_.vocab);
  for (std::size_t i = 0; i < cfg_.n_items; ++i) {
    catalog_.items[i].quality = std::move(quality[i]);
    catalog_.items[i].sid = ids[i];
    catalog_.by_sid.emplace(ids[i], i);
  }

  users_.resize(cfg_.n_users);
  for (std::size_t u = 0; u < cfg_.n_users; ++u) {
    users_[u].id = u;
    users_[u].preference.resize(cfg_.quality_dim);
    for (double& p : users_[u].preference) p = cfg_.pref_scale * normal(rng);
  }

  const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.raw_dim()));
  feature_map_.resize(cfg_.raw_dim() * cfg_.context_dim);
  for (double& w : feature_map_) w = s * normal(rng);
}

double World::affinity(std::uint64_t user, std::size_t item) const {
  const auto& p = users_.at(user).preference;
  const auto& q = catalog_.items.at(item).quality;
  return std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
}

double World::negative_probability(double a) const {
  return cfg_.neg_max_prob * sigmoid(cfg_.neg_sharpness * (cfg_.neg_threshold - a));
}

InteractionRecord World::simulate_feedback(std::uint64_t user, std::size_t item,
                                           std::mt19937_64& rng, std::uint64_t ts, Source source,
                                           std::optional<std::array<double, 3>> behavior_prob) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = affinity(user, item);
  const double noise = cfg_.watch_noise * normal(rng);
  const double u = uniform01(rng);
  InteractionRecord r;
  r.user_id = user;
  r.item = catalog_.items[item].sid;
  r.duration = catalog_.items[item].duration;
  r.playing_time = r.duration * sigmoid(a + noise);
  r.neg = u < negative_probability(a);
  r.source = source;
  r.behavior_prob = behavior_prob;
  r.ts = ts;
  return r;
}

std::vector<double> World::exposure_distribution(std::uint64_t user) const {
  std::vector<double> w(cfg_.n_items);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = affinity(user, i) / cfg_.exposure_temperature;
    hi = std::max(hi, w[i]);
  }
  double z = 0.0;
  for (double& x : w) z += (x = std::exp(x - hi));
  for (double& x : w) x /= z;
  return w;
}

std::size_t World::sample_exposure(std::uint64_t user, std::mt19937_64& rng) const {
  const auto w = exposure_distribution(user);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return w.size() - 1;
}

std::vector<double> World::raw_static(std::uint64_t user) const {
  std::vector<double> f(cfg_.raw_dim(), 0.0);
  const auto& p = users_.at(user).preference;
  std::copy(p.begin(), p.end(), f.begin());
  f.back() = -1.0;
  return f;
}

std::vector<double> World::raw_history(const InteractionRecord& r) const {
  std::vector<double> f(cfg_.raw_dim(), 0.0);
  const auto idx = catalog_.find(r.item);
  if (idx) {
    const auto& q = catalog_.items[*idx].quality;
    std::copy(q.begin(), q.end(), f.begin());
  }
  const std::size_t k = cfg_.quality_dim;
  f[k] = (std::log(r.duration) - cfg_.duration_log_mean) / cfg_.duration_log_std;
  f[k + 1] = r.playing_time / r.duration;
  f[k + 2] = r.neg ? 1.0 : 0.0;
  f[k + 3] = 1.0;
  return f;
}

Array World::context_tokens(std::uint64_t user,
                            const std::vector<InteractionRecord>& history) const {
  const std::size_t n = cfg_.context_len, dc = cfg_.context_dim, raw = cfg_.raw_dim();
  Array out(Shape{n, dc}, 0.0);
  auto emit = [&](std::size_t slot, const std::vector<double>& f) {
    for (std::size_t c = 0; c < dc; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < raw; ++r) s += f[r] * feature_map_[r * dc + c];
      out[slot * dc + c] = s;
    }
  };
  emit(0, raw_static(user));
  const std::size_t take = std::min(n - 1, history.size());
  const std::size_t first = history.size() - take;
  for (std::size_t i = 0; i < take; ++i) emit(1 + i, raw_history(history[first + i]));
  return out;
}

nlohmann::json World::snapshot() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : catalog_.items) {
    items.push_back({{"id", it.id},
                     {"s1", it.sid.s1},
                     {"s2", it.sid.s2},
                     {"s3", it.sid.s3},
                     {"duration", it.duration},
                     {"quality", it.quality}});
  }
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : users_) users.push_back({{"id", u.id}, {"preference", u.preference}});
  return {{"config", cfg_}, {"items", items}, {"users", users}};
}

// --- Simulator -----------------------------------------------------------------

Simulator::Simulator(const World& world, std::uint64_t seed)
    : world_(&world), rng_(seed), history_(world.config().n_users) {}

std::uint64_t Simulator::sample_user() {
  std::uniform_int_distribution<std::uint64_t> pick(0, world_->config().n_users - 1);
  return pick(rng_);
}

InteractionRecord Simulator::expose(std::uint64_t user, std::size_t item, Source source,
                                    std::optional<std::array<double, 3>> behavior_prob) {
  InteractionRecord r = world_->simulate_feedback(user, item, rng_, tick_++, source, behavior_prob);
  auto& h = history_.at(user);
  h.push_back(r);
  if (h.size() > world_->config().max_history) h.erase(h.begin());
  return r;
}

InteractionRecord Simulator::next_impression() {
  const std::uint64_t user = sample_user();
  return expose(user, world_->sample_exposure(user, rng_));
}

const std::vector<InteractionRecord>& Simulator::history(std::uint64_t user) const {
  return history_.at(user);
}

Array Simulator::context_for(std::uint64_t user) const {
  return world_->context_tokens(user, history_.at(user));
}

// --- data organization -----------------------------------------------------------

std::string to_string(Organization o) {
  switch (o) {
    case Organization::naive_impression: return "naive_impression";
    case Organization::user_centric: return "user_centric";
    case Organization::newest_only: return "newest_only";
  }
  return "unknown";
}

Organization parse_organization(const std::string& name) {
  if (name == "naive_impression") return Organization::naive_impression;
  if (name == "user_centric") return Organization::user_centric;
  if (name == "newest_only") return Organization::newest_only;
  throw ConfigError("unknown data organization '" + name + "'");
}

std::vector<TrainingSample> organize(const std::vector<InteractionRecord>& log, Organization mode) {
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (log[i].ts < log[i - 1].ts) throw std::invalid_argument("organize: records are not time-ordered");
  }
  std::map<std::uint64_t, std::vector<std::size_t>> seq;
  for (std::size_t i = 0; i < log.size(); ++i) seq[log[i].user_id].push_back(i);

  std::vector<TrainingSample> out;
  if (mode == Organization::user_centric) {
    for (const auto& [user, idx] : seq) {
      out.push_back({user, idx, idx, log[idx.back()].ts});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const TrainingSample& a, const TrainingSample& b) { return a.ts < b.ts; });
    return out;
  }
  std::map<std::uint64_t, std::size_t> position;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& idx = seq[log[i].user_id];
    const std::size_t t = position[log[i].user_id]++;
    TrainingSample s;
    s.user = log[i].user_id;
    s.context.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(t));
    if (mode == Organization::newest_only) {
      s.targets = {i};
    } else {
      s.targets.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(t + 1));
    }
    s.ts = log[i].ts;
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t count_leakage(const std::vector<TrainingSample>& samples,
                          const std::vector<InteractionRecord>& log) {
  std::size_t leaks = 0;
  for (const auto& s : samples) {
    if (s.context.empty()) continue;
    std::uint64_t newest = 0;
    for (std::size_t c : s.context) newest = std::max(newest, log.at(c).ts);
    for (std::size_t t : s.targets) {
      if (log.at(t).ts <= newest) {
        ++leaks;
        break;
      }
    }
  }
  return leaks;
}

std::map<std::pair<std::size_t, std::size_t>, std::size_t> transition_counts(
    const std::vector<TrainingSample>& samples, const std::vector<InteractionRecord>& log) {
  std::map<std::size_t, std::size_t> previous;  // record -> user's preceding record
  std::map<std::uint64_t, std::size_t> last;
  for (std::size_t i = 0; i < log.size(); ++i) {
    auto it = last.find(log[i].user_id);
    if (it != last.end()) previous[i] = it->second;
    last[log[i].user_id] = i;
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
  for (const auto& s : samples) {
    for (std::size_t t : s.targets) {
      auto it = previous.find(t);
      if (it != previous.end()) ++counts[{it->second, t}];
    }
  }
  return counts;
}

// --- BatchStream -----------------------------------------------------------------

BatchStream::BatchStream(const World& world, Organization mode, std::size_t batch,
                         std::uint64_t seed)
    : mode_(mode), batch_(batch), sim_(world, seed), keep_(world.config().sampling_ratio) {
  if (batch_ == 0) throw ConfigError("batch size must be >= 1");
}

void BatchStream::refill() {
  const InteractionRecord r = sim_.next_impression();
  const std::uint64_t at = r.ts;
  if (!keep_(sim_.rng())) return;
  const auto& h = sim_.history(r.user_id);  // ends with r
  switch (mode_) {
    case Organization::newest_only:
      pending_.push_back({r.user_id, r, {h.begin(), h.end() - 1}, at});
      break;
    case Organization::naive_impression:
      for (std::size_t j = 0; j < h.size(); ++j) {
        pending_.push_back(
            {r.user_id, h[j], {h.begin(), h.begin() + static_cast<std::ptrdiff_t>(j)}, at});
      }
      break;
    case Organization::user_centric:
      for (const auto& t : h) pending_.push_back({r.user_id, t, h, at});
      break;
  }
}

Batch BatchStream::next() {
  while (pending_.size() < batch_) refill();
  const auto& wc = sim_.world().config();
  Batch b;
  b.context = Array(Shape{batch_, wc.context_len, wc.context_dim});
  const std::size_t per = wc.context_len * wc.context_dim;
  for (std::size_t i = 0; i < batch_; ++i) {
    Pending p = std::move(pending_.front());
    pending_.pop_front();
    const Array ctx = sim_.world().context_tokens(p.user, p.context);
    std::copy(ctx.ptr(), ctx.ptr() + per, b.context.ptr() + i * per);
    b.items.push_back(p.target.item);
    b.records.push_back(std::move(p.target));
    b.emitted_at.push_back(p.emitted_at);
  }
  return b;
}

}  // namespace lazyrec
