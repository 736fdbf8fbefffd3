#pragma once

#include <memory>

#include "ctxprobe/models/masked_lm.hpp"
#include "ctxprobe/scoring/scorer.hpp"

namespace ctxprobe {

// Exposes a trained MaskedLm through the Scorer boundary. The model is shared
// read-only; concurrent queries are safe.
class NativeModelScorer final : public Scorer {
 public:
  NativeModelScorer(std::shared_ptr<const MaskedLm> model, AlphabetPtr alphabet, std::string name = {});

  [[nodiscard]] std::string name() const override { return name_; }
  [[nodiscard]] Capabilities capabilities() const override;
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;

  [[nodiscard]] const MaskedLm& model() const noexcept { return *model_; }

  // Model tokens for a sequence with the given positions replaced by the mask.
  [[nodiscard]] std::vector<int> tokens(const Sequence& x, std::span<const std::size_t> masked) const;

 private:
  std::shared_ptr<const MaskedLm> model_;
  AlphabetPtr alphabet_;
  std::string name_;
};

}  // namespace ctxprobe
