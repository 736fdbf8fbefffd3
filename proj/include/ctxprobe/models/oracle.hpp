#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ctxprobe/scoring/scorer.hpp"

namespace ctxprobe {

enum class OracleFallback { uniform, unigram };

struct OracleConfig {
  // Half-width of the flank compared around the query and each candidate.
  std::size_t flank = 10;
  // Minimum flank score for a candidate to be retrieved.
  std::size_t min_match = 9;
  OracleFallback fallback = OracleFallback::uniform;
  // Required for the unigram fallback.
  std::vector<double> background;
  // Strict-substring variant: score is the length of the unbroken matching
  // run on each side of the site instead of matches minus mismatches.
  bool contiguous = false;

  void validate(std::size_t alphabet_size) const;
};

// Analytic in-context retrieval: predicts a masked symbol by copying the
// symbol of the position whose flank best matches the query's flank.
//
// For query i and candidate j != i, each offset d in [-flank, flank] \ {0}
// with both i+d and j+d inside the sequence and unmasked compares the two
// symbols. The default score is matches - mismatches; positions that are
// masked or out of range are neutral. The oracle answers one-hot at
// symbol(j*) when the top score is >= min_match, every top-scoring candidate
// is unmasked, and they all carry the same symbol; otherwise it answers the
// fallback distribution. Masked candidates compete (and veto) but never
// supply a symbol.
//
// With no masked positions in the query every position is answered as if it
// alone were hidden, but remains visible as evidence for the others.
class RetrievalOracle final : public Scorer {
 public:
  RetrievalOracle(AlphabetPtr alphabet, OracleConfig config = {});

  [[nodiscard]] std::string name() const override;
  [[nodiscard]] Capabilities capabilities() const override;
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;

  // Symbol retrieved for position i, or nullopt when the fallback applies.
  [[nodiscard]] std::optional<Symbol> retrieve(std::span<const Symbol> symbols, std::span<const bool> masked,
                                               std::size_t i) const;
  [[nodiscard]] const std::vector<double>& fallback_row() const noexcept { return fallback_; }
  [[nodiscard]] const OracleConfig& config() const noexcept { return config_; }

 private:
  [[nodiscard]] long flank_score(std::span<const Symbol> symbols, std::span<const bool> masked, std::size_t i,
                                 std::size_t j) const;

  AlphabetPtr alphabet_;
  OracleConfig config_;
  std::vector<double> fallback_;
};

}  // namespace ctxprobe
