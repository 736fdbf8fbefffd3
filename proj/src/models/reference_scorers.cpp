#include "ctxprobe/models/reference_scorers.hpp"

#include <cmath>
#include <numeric>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

ScorerResponse constant_rows(const ScorerQuery& query, const std::vector<double>& row) {
  query.validate();
  ScorerResponse r{DistributionMatrix(row.size()), std::nullopt};
  if (query.wants.distributions)
    for (std::size_t p : query.covered_positions()) r.distributions.append(p, row);
  return r;
}

}  // namespace

Capabilities UniformScorer::capabilities() const { return Capabilities{}; }

ScorerResponse UniformScorer::score(const ScorerQuery& query) const {
  check_query_fits(*this, query);
  std::vector<double> row(alphabet_->size(), 1.0 / static_cast<double>(alphabet_->size()));
  return constant_rows(query, row);
}

UnigramScorer::UnigramScorer(AlphabetPtr alphabet, std::vector<double> frequencies)
    : alphabet_(std::move(alphabet)), frequencies_(std::move(frequencies)) {
  if (frequencies_.size() != alphabet_->size()) throw InvalidArgument("unigram frequencies must cover the alphabet");
  const double total = std::accumulate(frequencies_.begin(), frequencies_.end(), 0.0);
  if (!(total > 0.0)) throw InvalidArgument("unigram frequencies must have positive mass");
  for (double& f : frequencies_) {
    if (f < 0.0) throw InvalidArgument("unigram frequencies must be nonnegative");
    f /= total;
  }
}

UnigramScorer UnigramScorer::fit(const std::vector<Sequence>& corpus) {
  if (corpus.empty()) throw InvalidArgument("cannot fit unigram frequencies on an empty corpus");
  std::vector<double> counts(corpus.front().alphabet().size(), 1.0);
  for (const auto& s : corpus)
    for (Symbol c : s.symbols()) counts[c] += 1.0;
  return UnigramScorer(corpus.front().alphabet_ptr(), std::move(counts));
}

Capabilities UnigramScorer::capabilities() const { return Capabilities{}; }

ScorerResponse UnigramScorer::score(const ScorerQuery& query) const {
  check_query_fits(*this, query);
  return constant_rows(query, frequencies_);
}

Capabilities CausalTableScorer::capabilities() const {
  Capabilities c;
  c.distributions = false;
  c.causal = true;
  return c;
}

ScorerResponse CausalTableScorer::score(const ScorerQuery&) const {
  throw CapabilityError("causal-table scorer does not answer masked queries");
}

std::vector<double> CausalTableScorer::causal_log_probs(const Sequence& x) const {
  if (x.size() != probabilities_.size()) throw InvalidArgument("causal table length does not match sequence");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(probabilities_[i]);
  return out;
}

}  // namespace ctxprobe
