#pragma once

#include <array>
#include <vector>

#include "lazyrec/lazy_model.hpp"

namespace lazyrec {

struct BeamHypothesis {
  SemanticItem item;
  double log_prob = 0.0;
  std::array<double, 3> token_probs{};  // p(s^i | prefix, context)
};

// Beam search over the three semantic-ID positions for one user. `kv` must
// have batch extent 1. Widths above V^3 are clamped. Results are ranked by
// descending log-probability, ties broken by ascending (s1, s2, s3).
std::vector<BeamHypothesis> beam_generate(const LazyDecoder& model, const SharedKVSet& kv,
                                          std::size_t beam);

// Scores every item of the V^3 space. Intended for small V only.
std::vector<BeamHypothesis> enumerate_items(const LazyDecoder& model, const SharedKVSet& kv);

// Replicates a batch-1 key/value set `n` times along the batch axis.
SharedKVSet repeat_batch(const SharedKVSet& kv, std::size_t n);

}  // namespace lazyrec
