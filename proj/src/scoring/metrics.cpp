#include "ctxprobe/scoring/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

DistributionMatrix one_at_a_time_profile(const Scorer& scorer, const Sequence& x, const ProfileOptions& options) {
  std::vector<std::size_t> positions = options.positions;
  if (positions.empty()) {
    positions.resize(x.size());
    std::iota(positions.begin(), positions.end(), 0);
  }
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t width = x.alphabet().size();
  DistributionMatrix profile(width);

  std::vector<ScorerQuery> queries;
  for (std::size_t begin = 0; begin < positions.size(); begin += batch) {
    const std::size_t end = std::min(positions.size(), begin + batch);
    queries.clear();
    for (std::size_t k = begin; k < end; ++k) {
      if (positions[k] >= x.size()) throw InvalidArgument("profile position out of range");
      queries.push_back(ScorerQuery{x, {positions[k]}, Wants{}});
    }
    std::vector<ScorerResponse> responses;
    try {
      responses = scorer.score_batch(queries);
    } catch (const ContextError&) {
      throw;
    } catch (const CapabilityError&) {
      throw;
    } catch (const std::exception& batch_error) {
      // Locate the failing position by replaying the batch one query at a time.
      for (std::size_t k = begin; k < end; ++k) {
        try {
          (void)scorer.score(queries[k - begin]);
        } catch (const std::exception& e) {
          throw ScorerError(std::string("scorer failed on masked position ") + std::to_string(positions[k]) + ": " +
                                e.what(),
                            static_cast<long>(positions[k]));
        }
      }
      throw ScorerError(std::string("scorer failed on batch starting at position ") + std::to_string(positions[begin]) +
                            ": " + batch_error.what(),
                        static_cast<long>(positions[begin]));
    }
    if (responses.size() != end - begin) throw ScorerError("scorer returned wrong batch size");
    for (std::size_t k = begin; k < end; ++k) {
      const auto& dist = responses[k - begin].distributions;
      if (dist.width() != width) throw ScorerError("scorer returned wrong width", static_cast<long>(positions[k]));
      profile.append(positions[k], dist.at_position(positions[k]));
    }
  }
  return profile;
}

DistributionMatrix ofs_profile(const Scorer& scorer, const Sequence& x) {
  auto response = scorer.score(ScorerQuery{x, {}, Wants{}});
  if (response.distributions.rows() != x.size()) throw ScorerError("OFS response does not cover every position");
  return std::move(response.distributions);
}

Perplexity pseudo_perplexity_detail(const DistributionMatrix& profile, const Sequence& x,
                                    std::span<const std::size_t> positions) {
  if (positions.empty()) throw InvalidArgument("pseudo-perplexity over an empty position set");
  Perplexity out;
  std::vector<double> probs;
  probs.reserve(positions.size());
  for (std::size_t i : positions) {
    if (i >= x.size()) throw InvalidArgument("pseudo-perplexity position out of range");
    double p = profile.at_position(i)[x[i]];
    if (!(p >= kProbabilityFloor)) {
      p = kProbabilityFloor;
      ++out.floored_rows;
    }
    probs.push_back(p);
  }
  // Perplexity does not depend on the log base. Base-2 logs taken relative
  // to the first probability keep dyadic and constant profiles exact.
  const double ref = probs.front();
  const double log_ref = std::log2(ref);
  double nll = 0.0;
  for (double p : probs) nll -= p == ref ? 0.0 : std::log2(p) - log_ref;
  out.value = std::exp2(nll / static_cast<double>(probs.size())) / ref;
  return out;
}

Perplexity pseudo_perplexity_detail(const DistributionMatrix& profile, const Sequence& x, std::optional<Span> span) {
  Span s = span.value_or(Span{0, x.size()});
  s.validate(x.size());
  std::vector<std::size_t> positions(s.length());
  std::iota(positions.begin(), positions.end(), s.start);
  return pseudo_perplexity_detail(profile, x, std::span<const std::size_t>(positions));
}

double pseudo_perplexity(const DistributionMatrix& profile, const Sequence& x, std::optional<Span> span) {
  return pseudo_perplexity_detail(profile, x, span).value;
}

double entropy(std::span<const double> row) {
  double h = 0.0;
  for (double p : row)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double causal_perplexity_from_log_probs(std::span<const double> log_probs) {
  if (log_probs.empty()) throw InvalidArgument("causal perplexity of an empty sequence");
  double nll = 0.0;
  for (double lp : log_probs) nll -= std::max(lp, std::log(kProbabilityFloor));
  return std::exp(nll / static_cast<double>(log_probs.size()));
}

double causal_perplexity(const Scorer& scorer, const Sequence& x) {
  if (!scorer.capabilities().causal) throw CapabilityError("scorer '" + scorer.name() + "' has no causal capability");
  auto lp = scorer.causal_log_probs(x);
  if (lp.size() != x.size()) throw ScorerError("causal scorer returned wrong number of log-probabilities");
  return causal_perplexity_from_log_probs(lp);
}

ScoreSummary summarize(const DistributionMatrix& profile, const Sequence& x, std::span<const Span> spans) {
  ScoreSummary s;
  auto whole = pseudo_perplexity_detail(profile, x);
  s.pppl = whole.value;
  s.floored_rows = whole.floored_rows;
  for (const auto& span : spans) s.local_pppl.push_back(pseudo_perplexity(profile, x, span));
  double h = 0.0;
  for (std::size_t r = 0; r < profile.rows(); ++r) h += entropy(profile.row(r));
  s.mean_entropy = profile.rows() ? h / static_cast<double>(profile.rows()) : 0.0;
  return s;
}

ProfileDivergence profile_divergence(const DistributionMatrix& reference, const DistributionMatrix& other) {
  if (reference.width() != other.width()) throw InvalidArgument("profiles differ in width");
  ProfileDivergence d;
  std::size_t shared = 0;
  for (std::size_t r = 0; r < reference.rows(); ++r) {
    auto o = other.row_of(reference.position(r));
    if (!o) continue;
    auto p = reference.row(r);
    auto q = other.row(*o);
    double kl = 0.0, tv = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (p[a] > 0.0) kl += p[a] * (std::log(p[a]) - std::log(std::max(q[a], kProbabilityFloor)));
      tv += std::abs(p[a] - q[a]);
    }
    d.mean_kl += kl;
    d.mean_total_variation += 0.5 * tv;
    ++shared;
  }
  if (shared) {
    d.mean_kl /= static_cast<double>(shared);
    d.mean_total_variation /= static_cast<double>(shared);
  }
  return d;
}

}  // namespace ctxprobe
