#include "ctxprobe/scoring/scorer.hpp"

#include <algorithm>
#include <numeric>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

void ScorerQuery::validate() const {
  for (std::size_t k = 0; k < masked_positions.size(); ++k) {
    if (masked_positions[k] >= sequence.size())
      throw InvalidArgument("masked position " + std::to_string(masked_positions[k]) + " out of range");
    if (k > 0 && masked_positions[k] <= masked_positions[k - 1])
      throw InvalidArgument("masked positions must be sorted and unique");
  }
  if (!wants.distributions && !wants.embeddings) throw InvalidArgument("query wants nothing");
}

std::vector<std::size_t> ScorerQuery::covered_positions() const {
  if (!masked_positions.empty()) return masked_positions;
  std::vector<std::size_t> all(sequence.size());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

std::vector<ScorerResponse> Scorer::score_batch(std::span<const ScorerQuery> queries) const {
  std::vector<ScorerResponse> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(score(q));
  return out;
}

std::vector<double> Scorer::causal_log_probs(const Sequence&) const {
  throw CapabilityError("scorer '" + name() + "' has no causal capability");
}

void check_query_fits(const Scorer& scorer, const ScorerQuery& query) {
  const auto caps = scorer.capabilities();
  if (query.wants.distributions && !caps.distributions)
    throw CapabilityError("scorer '" + scorer.name() + "' does not return distributions");
  if (query.wants.embeddings && !caps.embeddings)
    throw CapabilityError("scorer '" + scorer.name() + "' does not return embeddings");
  if (caps.context_limit && query.sequence.size() > *caps.context_limit)
    throw ContextError("sequence of length " + std::to_string(query.sequence.size()) + " exceeds context of " +
                       std::to_string(*caps.context_limit));
}

ScorerResponse CountingScorer::score(const ScorerQuery& query) const {
  ++queries_;
  ++batches_;
  return inner_.score(query);
}

std::vector<ScorerResponse> CountingScorer::score_batch(std::span<const ScorerQuery> queries) const {
  queries_ += queries.size();
  ++batches_;
  return inner_.score_batch(queries);
}

std::vector<double> CountingScorer::causal_log_probs(const Sequence& x) const {
  ++queries_;
  ++batches_;
  return inner_.causal_log_probs(x);
}

}  // namespace ctxprobe
