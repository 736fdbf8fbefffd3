#include "ctxprobe/models/oracle.hpp"

#include <numeric>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

void OracleConfig::validate(std::size_t alphabet_size) const {
  if (flank < 1) throw InvalidArgument("oracle flank must be at least 1");
  if (min_match > 2 * flank) throw InvalidArgument("oracle min_match cannot exceed 2 * flank");
  if (min_match < 1) throw InvalidArgument("oracle min_match must be at least 1");
  if (fallback == OracleFallback::unigram && background.size() != alphabet_size)
    throw InvalidArgument("unigram fallback needs background frequencies over the alphabet");
}

RetrievalOracle::RetrievalOracle(AlphabetPtr alphabet, OracleConfig config)
    : alphabet_(std::move(alphabet)), config_(std::move(config)) {
  config_.validate(alphabet_->size());
  if (config_.fallback == OracleFallback::uniform) {
    fallback_.assign(alphabet_->size(), 1.0 / static_cast<double>(alphabet_->size()));
  } else {
    fallback_ = config_.background;
    const double total = std::accumulate(fallback_.begin(), fallback_.end(), 0.0);
    for (double& f : fallback_) f /= total;
  }
}

std::string RetrievalOracle::name() const {
  return std::string(config_.contiguous ? "oracle-contiguous" : "oracle") + "(flank=" +
         std::to_string(config_.flank) + ",min_match=" + std::to_string(config_.min_match) + ")";
}

Capabilities RetrievalOracle::capabilities() const { return Capabilities{}; }

long RetrievalOracle::flank_score(std::span<const Symbol> symbols, std::span<const bool> masked, std::size_t i,
                                  std::size_t j) const {
  const auto n = static_cast<long>(symbols.size());
  const auto f = static_cast<long>(config_.flank);
  const auto si = static_cast<long>(i);
  const auto sj = static_cast<long>(j);
  auto compare = [&](long d) -> int {  // 1 match, -1 mismatch, 0 neutral
    const long a = si + d;
    const long b = sj + d;
    if (a < 0 || b < 0 || a >= n || b >= n) return 0;
    if (masked[static_cast<std::size_t>(a)] || masked[static_cast<std::size_t>(b)]) return 0;
    return symbols[static_cast<std::size_t>(a)] == symbols[static_cast<std::size_t>(b)] ? 1 : -1;
  };
  long score = 0;
  if (config_.contiguous) {
    for (long dir : {-1L, 1L})
      for (long step = 1; step <= f; ++step) {
        if (compare(dir * step) != 1) break;
        ++score;
      }
    return score;
  }
  for (long d = -f; d <= f; ++d)
    if (d != 0) score += compare(d);
  return score;
}

std::optional<Symbol> RetrievalOracle::retrieve(std::span<const Symbol> symbols, std::span<const bool> masked,
                                                std::size_t i) const {
  long best = std::numeric_limits<long>::min();
  bool veto = false;
  std::optional<Symbol> symbol;
  bool conflict = false;
  for (std::size_t j = 0; j < symbols.size(); ++j) {
    if (j == i) continue;
    const long s = flank_score(symbols, masked, i, j);
    if (s < best) continue;
    if (s > best) {
      best = s;
      veto = false;
      conflict = false;
      symbol.reset();
    }
    if (masked[j]) {
      veto = true;
    } else if (!symbol) {
      symbol = symbols[j];
    } else if (*symbol != symbols[j]) {
      conflict = true;
    }
  }
  if (best < static_cast<long>(config_.min_match) || veto || conflict || !symbol) return std::nullopt;
  return symbol;
}

ScorerResponse RetrievalOracle::score(const ScorerQuery& query) const {
  query.validate();
  check_query_fits(*this, query);
  const auto& seq = query.sequence;
  if (!(seq.alphabet() == *alphabet_)) throw InvalidArgument("oracle: query alphabet differs from oracle alphabet");
  std::vector<bool> mask_vec(seq.size(), false);
  for (std::size_t p : query.masked_positions) mask_vec[p] = true;
  // std::vector<bool> has no contiguous storage; copy into a plain array.
  std::unique_ptr<bool[]> masked(new bool[seq.size()]);
  for (std::size_t p = 0; p < seq.size(); ++p) masked[p] = mask_vec[p];
  std::span<const bool> mask_span(masked.get(), seq.size());

  ScorerResponse r{DistributionMatrix(alphabet_->size()), std::nullopt};
  std::vector<double> one_hot(alphabet_->size(), 0.0);
  for (std::size_t p : query.covered_positions()) {
    auto hit = retrieve(seq.symbols(), mask_span, p);
    if (!hit) {
      r.distributions.append(p, fallback_);
      continue;
    }
    std::fill(one_hot.begin(), one_hot.end(), 0.0);
    one_hot[*hit] = 1.0;
    r.distributions.append(p, one_hot);
  }
  return r;
}

}  // namespace ctxprobe
