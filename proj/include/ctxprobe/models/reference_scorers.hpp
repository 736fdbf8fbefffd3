#pragma once

#include <memory>
#include <vector>

#include "ctxprobe/scoring/scorer.hpp"

namespace ctxprobe {

// Predicts 1/|A| everywhere.
class UniformScorer final : public Scorer {
 public:
  explicit UniformScorer(AlphabetPtr alphabet) : alphabet_(std::move(alphabet)) {}
  [[nodiscard]] std::string name() const override { return "uniform"; }
  [[nodiscard]] Capabilities capabilities() const override;
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;

 private:
  AlphabetPtr alphabet_;
};

// Predicts fixed background symbol frequencies everywhere.
class UnigramScorer final : public Scorer {
 public:
  UnigramScorer(AlphabetPtr alphabet, std::vector<double> frequencies);
  // Add-one smoothed composition of a corpus.
  static UnigramScorer fit(const std::vector<Sequence>& corpus);

  [[nodiscard]] std::string name() const override { return "unigram"; }
  [[nodiscard]] Capabilities capabilities() const override;
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;
  [[nodiscard]] const std::vector<double>& frequencies() const noexcept { return frequencies_; }

 private:
  AlphabetPtr alphabet_;
  std::vector<double> frequencies_;
};

// Fixed per-position next-symbol probabilities; a causal test double that
// returns ln table[i] as the log-probability of x_i given x_<i.
class CausalTableScorer final : public Scorer {
 public:
  explicit CausalTableScorer(std::vector<double> true_symbol_probabilities)
      : probabilities_(std::move(true_symbol_probabilities)) {}
  [[nodiscard]] std::string name() const override { return "causal-table"; }
  [[nodiscard]] Capabilities capabilities() const override;
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;
  [[nodiscard]] std::vector<double> causal_log_probs(const Sequence& x) const override;

 private:
  std::vector<double> probabilities_;
};

}  // namespace ctxprobe
