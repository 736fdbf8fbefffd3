#pragma once

#include "json.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/models/params.hpp"

namespace ctxprobe {

// Soft cross-entropy targets: one distribution over the alphabet per listed
// position.
struct TargetSet {
  std::vector<std::size_t> positions;
  Matrix distributions;  // positions.size() x alphabet size

  static TargetSet one_hot(std::span<const std::size_t> positions, std::span<const int> labels,
                           std::size_t alphabet_size);
};

struct LmOutput {
  Matrix logits;      // L x alphabet
  Matrix embeddings;  // L x embedding width
};

// A native masked language model over tokens 0..A-1 plus the mask token A.
class MaskedLm {
 public:
  virtual ~MaskedLm() = default;

  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual std::size_t alphabet_size() const = 0;
  [[nodiscard]] int mask_token() const { return static_cast<int>(alphabet_size()); }
  [[nodiscard]] virtual std::size_t embedding_width() const = 0;
  [[nodiscard]] virtual std::optional<std::size_t> context_limit() const = 0;

  [[nodiscard]] virtual LmOutput forward(std::span<const int> tokens) const = 0;

  // Mean soft cross-entropy over the target positions. Adds
  // weight * d(loss)/d(params) into `gradient` (same layout as params()).
  virtual double loss_and_gradient(std::span<const int> tokens, const TargetSet& targets, std::span<double> gradient,
                                   double weight = 1.0) const = 0;

  [[nodiscard]] double loss(std::span<const int> tokens, const TargetSet& targets) const;

  [[nodiscard]] ParamSet& params() noexcept { return params_; }
  [[nodiscard]] const ParamSet& params() const noexcept { return params_; }
  [[nodiscard]] virtual nlohmann::json config_json() const = 0;
  [[nodiscard]] virtual std::unique_ptr<MaskedLm> clone() const = 0;

 protected:
  void check_tokens(std::span<const int> tokens) const;
  ParamSet params_;
};

// Cross-entropy of softmax(logits) rows against the targets; fills dlogits
// (zero outside target rows) scaled by 1/|targets|.
double soft_cross_entropy(const Matrix& logits, const TargetSet& targets, Matrix* dlogits);

}  // namespace ctxprobe
