#include <gtest/gtest.h>

#include <cmath>

#include "ctxprobe/embedprobe/embedprobe.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/models/attention_lm.hpp"
#include "ctxprobe/models/native_scorer.hpp"
#include "ctxprobe/models/reference_scorers.hpp"
#include "ctxprobe/seqcore/generate.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {
namespace {

AlphabetPtr protein() { return make_alphabet(Alphabet::protein()); }

std::shared_ptr<NativeModelScorer> tiny_attention() {
  ToyAttentionConfig c;
  c.width = 16;
  c.heads = 2;
  c.depth = 1;
  c.seed = 4;
  return std::make_shared<NativeModelScorer>(std::make_shared<ToyAttentionLm>(c), protein());
}

// Longest substring of `a` (length >= k) found anywhere in `b`, by brute force.
bool shares_substring(const std::string& a, const std::string& b, std::size_t k) {
  for (std::size_t i = 0; i + k <= a.size(); ++i)
    if (b.find(a.substr(i, k)) != std::string::npos) return true;
  return false;
}

TEST(EmbedGroups, StandardLayout) {
  auto g = standard_groups();
  ASSERT_EQ(g.size(), 10u);
  EXPECT_EQ(g.front().name(), "1x");
  EXPECT_EQ(g[1].name(), "multiplicity-2x");
  EXPECT_EQ(g[5].name(), "control-2x");
  EXPECT_EQ(g.back().name(), "one-hot");
}

TEST(EmbedGroups, ControlMatchesMultiplicityLength) {
  auto corpus = random_corpus(6, 20, 150, protein(), 3);
  corpus.push_back(random_sequence(150, protein(), 4, "x150"));
  auto groups = build_groups(corpus, 9);
  ASSERT_EQ(groups.size(), 10u);
  for (std::size_t n = 2; n <= 5; ++n) {
    const auto& mult = groups[n - 1];
    const auto& ctrl = groups[n + 3];
    ASSERT_EQ(mult.spec.n, n);
    ASSERT_EQ(ctrl.spec.n, n);
    for (std::size_t k = 0; k < corpus.size(); ++k) {
      EXPECT_EQ(mult.sequences[k].size(), n * corpus[k].size());
      EXPECT_EQ(ctrl.sequences[k].size(), mult.sequences[k].size());
      EXPECT_EQ(ctrl.sequences[k].to_string().substr(0, corpus[k].size()), corpus[k].to_string());
      EXPECT_EQ(mult.sequences[k].to_string(), multiply(corpus[k], n).to_string());
    }
  }
  EXPECT_EQ(groups[3].sequences.back().size(), 600u);
  EXPECT_EQ(groups[7].sequences.back().size(), 600u);
}

TEST(EmbedGroups, ControlTailHoldsNoCopy) {
  auto corpus = random_corpus(20, 40, 120, protein(), 6);
  auto groups = build_groups(corpus, 2);
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto s = groups[5].sequences[k].to_string();
    const auto x = corpus[k].to_string();
    EXPECT_FALSE(shares_substring(x, s.substr(x.size()), 8));
  }
}

TEST(EmbedGroups, RejectsLongSequences) {
  std::vector<Sequence> corpus{random_sequence(200, protein(), 1)};
  EXPECT_THROW(build_groups(corpus, 1), InvalidArgument);
}

TEST(EmbedExtract, AlignedSetsAndSharedTargets) {
  auto corpus = random_corpus(5, 10, 20, protein(), 2);
  auto groups = build_groups(corpus, 3);
  auto scorer = tiny_attention();
  auto sets = extract_training_sets(*scorer, corpus, groups);
  ASSERT_EQ(sets.size(), 10u);
  for (const auto& s : sets) {
    EXPECT_EQ(s.sequence_index, sets[0].sequence_index);
    EXPECT_EQ(s.positions, sets[0].positions);
    EXPECT_EQ(s.targets, sets[0].targets);
    EXPECT_EQ(s.inputs.rows(), s.targets.rows());
    EXPECT_EQ(s.inputs.cols(), s.spec.kind == GroupKind::one_hot ? 20 : 16);
    for (Eigen::Index r = 0; r < s.targets.rows(); ++r) EXPECT_NEAR(s.targets.row(r).sum(), 1.0, 1e-12);
  }
  // One-hot inputs mark the true symbol.
  const auto& oh = sets.back();
  for (Eigen::Index r = 0; r < oh.inputs.rows(); ++r) {
    const auto& x = corpus[oh.sequence_index[static_cast<std::size_t>(r)]];
    EXPECT_EQ(oh.inputs(r, x[oh.positions[static_cast<std::size_t>(r)]]), 1.0);
    EXPECT_EQ(oh.inputs.row(r).sum(), 1.0);
  }
  // The 1x embeddings are the model's own unmasked pass.
  auto resp = scorer->score(ScorerQuery{corpus[0], {}, {false, true}});
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(sets[0].inputs(0, static_cast<Eigen::Index>(c)), resp.embeddings->row(0)[c]);
}

TEST(EmbedExtract, NeedsEmbeddings) {
  auto corpus = random_corpus(3, 10, 10, protein(), 2);
  UniformScorer uniform(protein());
  EXPECT_THROW(extract_training_sets(uniform, corpus, build_groups(corpus, 1)), CapabilityError);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  Mlp mlp(5, 4, {7, 6}, 3);
  Rng rng(1);
  Matrix x(9, 5);
  Matrix t(9, 4);
  for (Eigen::Index r = 0; r < 9; ++r) {
    for (Eigen::Index c = 0; c < 5; ++c) x(r, c) = rng.normal(0, 1);
    double s = 0;
    for (Eigen::Index c = 0; c < 4; ++c) s += t(r, c) = rng.unit() + 0.1;
    t.row(r) /= s;
  }
  std::vector<double> g(mlp.params().size());
  mlp.loss_and_gradient(x, t, g);
  auto p = mlp.params().values();
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double keep = p[k];
    p[k] = keep + 1e-5;
    const double up = mlp.loss(x, t);
    p[k] = keep - 1e-5;
    const double down = mlp.loss(x, t);
    p[k] = keep;
    const double num = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(num - g[k]) / std::max({std::abs(num), std::abs(g[k]), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Mlp, PredictRowsNormalized) {
  Mlp mlp(3, 20, {8}, 1);
  Matrix x = Matrix::Random(4, 3);
  auto p = mlp.predict(x);
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

// Inputs that fully determine the target versus pure noise.
std::vector<RegressionSet> synthetic_sets(std::size_t sequences, std::size_t per_seq) {
  Rng rng(5);
  const auto n = static_cast<Eigen::Index>(sequences * per_seq);
  RegressionSet informative{{GroupKind::baseline, 1}, Matrix(n, 4), Matrix::Zero(n, 4), {}, {}};
  RegressionSet noise{{GroupKind::one_hot, 1}, Matrix(n, 4), Matrix::Zero(n, 4), {}, {}};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto label = static_cast<Eigen::Index>(rng.index(4));
    for (Eigen::Index c = 0; c < 4; ++c) {
      informative.inputs(r, c) = c == label ? 1.0 : 0.0;
      noise.inputs(r, c) = rng.normal(0, 1);
    }
    informative.targets.row(r).setConstant(0.05);
    informative.targets(r, label) = 0.85;
    informative.sequence_index.push_back(static_cast<std::size_t>(r) / per_seq);
    informative.positions.push_back(static_cast<std::size_t>(r) % per_seq);
  }
  noise.targets = informative.targets;
  noise.sequence_index = informative.sequence_index;
  noise.positions = informative.positions;
  return {informative, noise};
}

TEST(EmbedRegression, InformativeInputsWinAndEntropyBounds) {
  auto sets = synthetic_sets(40, 10);
  MlpSpec spec;
  spec.hidden = {16, 16};
  spec.learning_rate = 1e-2;
  spec.max_epochs = 60;
  EvaluationConfig cfg;
  cfg.seed = 2;
  auto res = train_and_evaluate(sets, spec, cfg);
  ASSERT_EQ(res.groups.size(), 2u);
  EXPECT_LT(res.groups[0].mean_validation_loss, res.groups[1].mean_validation_loss);
  const double h = -(0.85 * std::log(0.85) + 3 * 0.05 * std::log(0.05));
  for (const auto& g : res.groups) {
    EXPECT_NEAR(g.mean_target_entropy, h, 1e-12);
    EXPECT_GE(g.mean_validation_loss, g.mean_target_entropy);
    EXPECT_EQ(g.failed_splits, 0u);
  }
  EXPECT_NEAR(res.groups[0].mean_validation_loss, h, 0.02);
  EXPECT_EQ(res.summary.rows.size(), 2u);
  EXPECT_EQ(res.curves.key_columns(), (std::vector<std::string>{"group", "split", "step"}));
}

TEST(EmbedRegression, DeterministicAcrossWorkers) {
  auto sets = synthetic_sets(20, 5);
  MlpSpec spec;
  spec.hidden = {8};
  spec.max_epochs = 5;
  EvaluationConfig one;
  one.seed = 4;
  EvaluationConfig many = one;
  many.workers = 3;
  EXPECT_EQ(train_and_evaluate(sets, spec, one).curves.to_csv(), train_and_evaluate(sets, spec, many).curves.to_csv());
}

TEST(EmbedRegression, NonFiniteLossRetriesThenFails) {
  auto sets = synthetic_sets(10, 4);
  sets[0].inputs(0, 0) = std::nan("");
  MlpSpec spec;
  spec.hidden = {4};
  spec.max_epochs = 3;
  spec.standardize = false;
  EvaluationConfig cfg;
  cfg.splits = 2;
  auto res = train_and_evaluate(sets, spec, cfg);
  // The poisoned row lands in training for at least one split.
  EXPECT_GE(res.groups[0].retried_splits, 1u);
  EXPECT_EQ(res.groups[0].retried_splits, res.groups[0].failed_splits);
  EXPECT_EQ(res.groups[1].failed_splits, 0u);
  EXPECT_TRUE(res.curves.partial());
}

TEST(EmbedRegression, RejectsMisalignedSets) {
  auto sets = synthetic_sets(10, 4);
  sets[1].positions[0] = 99;
  EXPECT_THROW(train_and_evaluate(sets, MlpSpec{}, EvaluationConfig{}), InvalidArgument);
}

}  // namespace
}  // namespace ctxprobe
