#include "ctxprobe/models/fixtures.hpp"

#include "ctxprobe/error.hpp"

namespace ctxprobe {

std::unique_ptr<MaskedLm> FixtureRecipe::make_model() const {
  if (kind == FixtureKind::attention) return std::make_unique<ToyAttentionLm>(attention);
  return std::make_unique<ToyConvLm>(conv);
}

nlohmann::json FixtureRecipe::to_json() const {
  nlohmann::json c{{"dup_fraction", corpus.dup_fraction},
                   {"min_length", corpus.min_length},
                   {"max_length", corpus.max_length},
                   {"min_segment", corpus.min_segment},
                   {"min_segment_fraction", corpus.min_segment_fraction},
                   {"max_segment_fraction", corpus.max_segment_fraction},
                   {"n_families", corpus.n_families},
                   {"seed", corpus.seed},
                   {"size", corpus_size}};
  if (corpus.max_copy_gap) c["max_copy_gap"] = *corpus.max_copy_gap;
  return {{"kind", fixture_name(kind)},
          {"model", kind == FixtureKind::attention ? attention.to_json() : conv.to_json()},
          {"corpus", c},
          {"train", train.to_json()}};
}

FixtureRecipe standard_fixture(FixtureKind kind) {
  FixtureRecipe r;
  r.kind = kind;
  r.corpus.alphabet = make_alphabet(Alphabet::protein());
  r.corpus.dup_fraction = 1.0;
  r.corpus.seed = 11;
  r.train.steps = 3000;
  r.train.seed = 2;
  if (kind == FixtureKind::attention) {
    r.attention.seed = 1;
    r.corpus.min_length = 32;
    r.corpus.max_length = 96;
    r.train.learning_rate = 3e-3;
  } else {
    r.conv.seed = 1;
    r.corpus.min_length = 12;
    r.corpus.max_length = 16;
    r.corpus.min_segment = 3;
    r.corpus.max_copy_gap = 0;
    r.train.learning_rate = 1e-3;
  }
  return r;
}

TrainedFixture train_fixture(const FixtureRecipe& recipe, const StepCallback& on_step) {
  std::shared_ptr<MaskedLm> model = recipe.make_model();
  const auto corpus = sample_corpus(recipe.corpus, recipe.corpus_size);
  auto result = train_masked_lm(*model, corpus, recipe.train, on_step);
  return {std::move(model), std::move(result)};
}

std::string fixture_name(FixtureKind kind) { return kind == FixtureKind::attention ? "attention" : "conv"; }

FixtureKind fixture_from_name(const std::string& s) {
  if (s == "attention") return FixtureKind::attention;
  if (s == "conv") return FixtureKind::conv;
  throw InvalidArgument("unknown toy model '" + s + "'");
}

}  // namespace ctxprobe
