#pragma once

#include <memory>

#include "ctxprobe/models/attention_lm.hpp"
#include "ctxprobe/models/conv_lm.hpp"
#include "ctxprobe/models/corpus.hpp"
#include "ctxprobe/models/train.hpp"

namespace ctxprobe {

enum class FixtureKind { attention, conv };

// Model, synthetic corpus and optimizer settings for one standard training
// run on the protein alphabet.
struct FixtureRecipe {
  FixtureKind kind = FixtureKind::attention;
  ToyAttentionConfig attention;
  ToyConvConfig conv;
  CorpusSpec corpus;
  std::size_t corpus_size = 20000;
  TrainConfig train;

  [[nodiscard]] std::unique_ptr<MaskedLm> make_model() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

// attention: D=64, 2 layers, 4 heads, attention-only, trained 3000 steps on
//   sequences of 32-96 residues that each contain one duplicated segment.
// conv: 4 layers of kernel 5 (R = 17), 128 channels, trained 3000 steps on
//   12-16 residue sequences holding a tandem repeat of 3+ residues.
FixtureRecipe standard_fixture(FixtureKind kind);

struct TrainedFixture {
  std::shared_ptr<MaskedLm> model;
  TrainResult result;
};
TrainedFixture train_fixture(const FixtureRecipe& recipe, const StepCallback& on_step = {});

std::string fixture_name(FixtureKind kind);
FixtureKind fixture_from_name(const std::string& s);

}  // namespace ctxprobe
