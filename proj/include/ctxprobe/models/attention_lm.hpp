#pragma once

#include <cstdint>

#include "ctxprobe/models/masked_lm.hpp"

namespace ctxprobe {

enum class PositionalScheme { sinusoidal, learned, none };

struct ToyAttentionConfig {
  std::size_t alphabet_size = 20;
  std::size_t depth = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t context_cap = 512;
  PositionalScheme positional = PositionalScheme::sinusoidal;
  // Hidden width of the per-position feed-forward block as a multiple of
  // width; 0 gives an attention-only model.
  std::size_t ffn_multiplier = 0;
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static ToyAttentionConfig from_json(const nlohmann::json& j);
};

// Bidirectional pre-norm transformer encoder.
class ToyAttentionLm final : public MaskedLm {
 public:
  explicit ToyAttentionLm(ToyAttentionConfig config);

  [[nodiscard]] std::string kind() const override { return "attention"; }
  [[nodiscard]] std::size_t alphabet_size() const override { return config_.alphabet_size; }
  [[nodiscard]] std::size_t embedding_width() const override { return config_.width; }
  [[nodiscard]] std::optional<std::size_t> context_limit() const override { return config_.context_cap; }
  [[nodiscard]] LmOutput forward(std::span<const int> tokens) const override;
  double loss_and_gradient(std::span<const int> tokens, const TargetSet& targets, std::span<double> gradient,
                           double weight) const override;
  [[nodiscard]] nlohmann::json config_json() const override { return config_.to_json(); }
  [[nodiscard]] std::unique_ptr<MaskedLm> clone() const override { return std::make_unique<ToyAttentionLm>(*this); }
  [[nodiscard]] const ToyAttentionConfig& config() const noexcept { return config_; }

 private:
  struct LayerIds {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct LayerCache;
  struct Cache;

  Matrix run(std::span<const int> tokens, Cache* cache) const;

  ToyAttentionConfig config_;
  std::size_t embed_;
  std::size_t pos_ = 0;
  std::vector<LayerIds> layers_;
  std::size_t lnf_g_, lnf_b_, wout_, bout_;
  Matrix sinusoid_;
};

}  // namespace ctxprobe
