#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/scoring/distribution.hpp"
#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

struct Wants {
  bool distributions = true;
  bool embeddings = false;
};

// A masked-LM question: which distributions does the model predict for
// `sequence` when `masked_positions` are hidden? With no masked positions the
// scorer answers for every position from a single unmasked pass.
struct ScorerQuery {
  Sequence sequence;
  std::vector<std::size_t> masked_positions;  // sorted, unique
  Wants wants{};

  void validate() const;
  // Positions the response must cover.
  [[nodiscard]] std::vector<std::size_t> covered_positions() const;
};

// Row-major per-position vectors of a fixed width.
struct EmbeddingMatrix {
  std::size_t width = 0;
  std::vector<double> values;

  [[nodiscard]] std::size_t rows() const noexcept { return width ? values.size() / width : 0; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const { return {values.data() + i * width, width}; }
  bool operator==(const EmbeddingMatrix&) const = default;
};

struct ScorerResponse {
  DistributionMatrix distributions;
  std::optional<EmbeddingMatrix> embeddings;  // one row per sequence position
};

struct Capabilities {
  bool distributions = true;
  bool embeddings = false;
  bool causal = false;
  // False means the harness must not query the scorer from several threads.
  bool concurrent = true;
  std::optional<std::size_t> context_limit;
  std::size_t embedding_width = 0;
};

class Scorer {
 public:
  virtual ~Scorer() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual Capabilities capabilities() const = 0;
  [[nodiscard]] virtual ScorerResponse score(const ScorerQuery& query) const = 0;
  // Default answers each query in turn.
  [[nodiscard]] virtual std::vector<ScorerResponse> score_batch(std::span<const ScorerQuery> queries) const;
  // ln p(x_i | x_<i) for every position. Only causal scorers implement this.
  [[nodiscard]] virtual std::vector<double> causal_log_probs(const Sequence& x) const;
};

using ScorerPtr = std::shared_ptr<const Scorer>;

// Throws ContextError when the query does not fit the scorer's window and
// CapabilityError for unsupported wants.
void check_query_fits(const Scorer& scorer, const ScorerQuery& query);

// Forwards to another scorer and counts queries and batches.
class CountingScorer : public Scorer {
 public:
  explicit CountingScorer(const Scorer& inner) : inner_(inner) {}

  [[nodiscard]] std::string name() const override { return inner_.name(); }
  [[nodiscard]] Capabilities capabilities() const override { return inner_.capabilities(); }
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;
  [[nodiscard]] std::vector<ScorerResponse> score_batch(std::span<const ScorerQuery> queries) const override;
  [[nodiscard]] std::vector<double> causal_log_probs(const Sequence& x) const override;

  [[nodiscard]] std::size_t queries() const noexcept { return queries_.load(); }
  [[nodiscard]] std::size_t batches() const noexcept { return batches_.load(); }

 private:
  const Scorer& inner_;
  mutable std::atomic<std::size_t> queries_{0};
  mutable std::atomic<std::size_t> batches_{0};
};

}  // namespace ctxprobe
