#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ctxprobe/scoring/distribution.hpp"
#include "ctxprobe/scoring/scorer.hpp"
#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

// Probabilities are clamped here before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

struct ProfileOptions {
  // Masked variants per scorer batch.
  std::size_t batch_size = 64;
  // Restrict to these positions (ascending); all positions when empty.
  std::vector<std::size_t> positions;
};

// Row i is the scorer's prediction at i when exactly position i is masked.
DistributionMatrix one_at_a_time_profile(const Scorer& scorer, const Sequence& x, const ProfileOptions& options = {});

// Every row from one unmasked query.
DistributionMatrix ofs_profile(const Scorer& scorer, const Sequence& x);

struct Perplexity {
  double value = 0.0;
  // Rows whose true-symbol probability was raised to kProbabilityFloor.
  std::size_t floored_rows = 0;
};

// exp of the mean negative log-probability of the true symbols over `span`
// (whole sequence by default).
Perplexity pseudo_perplexity_detail(const DistributionMatrix& profile, const Sequence& x,
                                    std::optional<Span> span = std::nullopt);
Perplexity pseudo_perplexity_detail(const DistributionMatrix& profile, const Sequence& x,
                                    std::span<const std::size_t> positions);
double pseudo_perplexity(const DistributionMatrix& profile, const Sequence& x,
                         std::optional<Span> span = std::nullopt);

// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(std::span<const double> row);

// exp(-(1/|x|) sum ln p(x_i | x_<i)); needs a causal scorer.
double causal_perplexity(const Scorer& scorer, const Sequence& x);
double causal_perplexity_from_log_probs(std::span<const double> log_probs);

struct ScoreSummary {
  double pppl = 1.0;
  std::vector<double> local_pppl;  // one per requested span
  double mean_entropy = 0.0;
  std::size_t floored_rows = 0;
};

ScoreSummary summarize(const DistributionMatrix& profile, const Sequence& x, std::span<const Span> spans = {});

struct ProfileDivergence {
  double mean_kl = 0.0;               // KL(reference || other), nats
  double mean_total_variation = 0.0;
};

// Compares two profiles row by row on their shared positions.
ProfileDivergence profile_divergence(const DistributionMatrix& reference, const DistributionMatrix& other);

}  // namespace ctxprobe
