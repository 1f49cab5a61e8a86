#include "lazyrec/beam_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lazyrec {

namespace {

ad::Var repeat_var(const ad::Var& x, std::size_t n) {
  Shape shape = x.shape();
  const std::size_t per = x.size() / shape[0];
  Shape out = shape;
  out[0] = n;
  return ad::reshape(ad::gather_rows(ad::reshape(x, {1, per}), std::vector<std::size_t>(n, 0)),
                     out);
}

bool ranks_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.item < b.item;
}

// Runs the decoder on `items` and returns the per-position probabilities.
std::array<Array, 3> position_probs(const LazyDecoder& model, const SharedKVSet& kv,
                                    const std::vector<SemanticItem>& items) {
  DecoderTrace trace = model.forward(items, repeat_batch(kv, items.size()));
  return {trace.probs[0].value(), trace.probs[1].value(), trace.probs[2].value()};
}

}  // namespace

SharedKVSet repeat_batch(const SharedKVSet& kv, std::size_t n) {
  if (kv.pairs.empty() || kv.pairs[0].first.shape()[0] != 1) {
    throw std::invalid_argument("repeat_batch: key/value set must have batch extent 1");
  }
  if (n == 1) return kv;
  SharedKVSet out;
  for (const auto& [k, v] : kv.pairs) {
    ad::Var rk = repeat_var(k, n);
    ad::Var rv = v.same_node(k) ? rk : repeat_var(v, n);
    out.pairs.emplace_back(rk, rv);
  }
  return out;
}

std::vector<BeamHypothesis> beam_generate(const LazyDecoder& model, const SharedKVSet& kv,
                                          std::size_t beam) {
  if (beam == 0) throw std::invalid_argument("beam_generate: beam must be >= 1");
  ad::NoGradGuard no_grad;
  const std::size_t v = model.config().vocab;
  std::vector<BeamHypothesis> hyps(1);
  // Causal masking means a prefix's position-i logits ignore the placeholder
  // tokens that fill the positions after it.
  for (std::size_t pos = 0; pos < 3; ++pos) {
    std::vector<SemanticItem> items;
    items.reserve(hyps.size());
    for (const auto& h : hyps) items.push_back(h.item);
    const Array probs = position_probs(model, kv, items)[pos];

    std::vector<BeamHypothesis> next;
    next.reserve(hyps.size() * v);
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      for (std::uint32_t tok = 0; tok < v; ++tok) {
        BeamHypothesis h = hyps[i];
        const double p = probs[i * v + tok];
        if (pos == 0) h.item.s1 = tok;
        if (pos == 1) h.item.s2 = tok;
        if (pos == 2) h.item.s3 = tok;
        h.token_probs[pos] = p;
        h.log_prob += std::log(p);
        next.push_back(h);
      }
    }
    const std::size_t keep = std::min(beam, next.size());
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep), next.end(),
                      ranks_before);
    next.resize(keep);
    hyps = std::move(next);
  }
  return hyps;
}

std::vector<BeamHypothesis> enumerate_items(const LazyDecoder& model, const SharedKVSet& kv) {
  ad::NoGradGuard no_grad;
  const std::uint32_t v = static_cast<std::uint32_t>(model.config().vocab);
  std::vector<SemanticItem> items;
  for (std::uint32_t a = 0; a < v; ++a)
    for (std::uint32_t b = 0; b < v; ++b)
      for (std::uint32_t c = 0; c < v; ++c) items.push_back({a, b, c});
  const auto probs = position_probs(model, kv, items);
  std::vector<BeamHypothesis> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    out[i].item = items[i];
    for (std::size_t pos = 0; pos < 3; ++pos) {
      const double p = probs[pos][i * v + items[i][pos]];
      out[i].token_probs[pos] = p;
      out[i].log_prob += std::log(p);
    }
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

}  // namespace lazyrec
