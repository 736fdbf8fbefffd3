#pragma once

#include <cstdint>

#include "ctxprobe/models/masked_lm.hpp"

namespace ctxprobe {

struct ToyConvConfig {
  std::size_t alphabet_size = 20;
  std::size_t layers = 4;
  std::size_t kernel = 5;  // odd, same for every layer
  std::size_t channels = 128;
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  // 1 + layers * (kernel - 1)
  [[nodiscard]] std::size_t receptive_field() const noexcept { return 1 + layers * (kernel - 1); }
  [[nodiscard]] nlohmann::json to_json() const;
  static ToyConvConfig from_json(const nlohmann::json& j);
};

// Residual stack of zero-padded "same" 1-D convolutions with pre-norm and
// GELU. Output at position i depends only on inputs within
// (receptive_field - 1) / 2 of i.
class ToyConvLm final : public MaskedLm {
 public:
  explicit ToyConvLm(ToyConvConfig config);

  [[nodiscard]] std::string kind() const override { return "conv"; }
  [[nodiscard]] std::size_t alphabet_size() const override { return config_.alphabet_size; }
  [[nodiscard]] std::size_t embedding_width() const override { return config_.channels; }
  [[nodiscard]] std::optional<std::size_t> context_limit() const override { return std::nullopt; }
  [[nodiscard]] LmOutput forward(std::span<const int> tokens) const override;
  double loss_and_gradient(std::span<const int> tokens, const TargetSet& targets, std::span<double> gradient,
                           double weight) const override;
  [[nodiscard]] nlohmann::json config_json() const override { return config_.to_json(); }
  [[nodiscard]] std::unique_ptr<MaskedLm> clone() const override { return std::make_unique<ToyConvLm>(*this); }
  [[nodiscard]] const ToyConvConfig& config() const noexcept { return config_; }

 private:
  struct LayerIds {
    std::size_t ln_g, ln_b, w, b;
  };
  struct Cache;

  Matrix run(std::span<const int> tokens, Cache* cache) const;

  ToyConvConfig config_;
  std::size_t embed_;
  std::vector<LayerIds> layers_;
  std::size_t lnf_g_, lnf_b_, wout_, bout_;
};

}  // namespace ctxprobe
