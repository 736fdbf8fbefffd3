#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctxprobe/error.hpp"
#include "ctxprobe/models/conv_lm.hpp"
#include "ctxprobe/models/native_scorer.hpp"
#include "ctxprobe/models/oracle.hpp"
#include "ctxprobe/models/reference_scorers.hpp"
#include "ctxprobe/probes/parallel.hpp"
#include "ctxprobe/probes/probes.hpp"
#include "ctxprobe/probes/svg.hpp"
#include "ctxprobe/seqcore/generate.hpp"

namespace ctxprobe {
namespace {

AlphabetPtr protein() { return make_alphabet(Alphabet::protein()); }
AlphabetPtr rna() { return make_alphabet(Alphabet::rna()); }

// Scorer that refuses inputs longer than a fixed limit.
class ShortContextScorer final : public Scorer {
 public:
  ShortContextScorer(AlphabetPtr a, std::size_t limit) : inner_(std::move(a)), limit_(limit) {}
  [[nodiscard]] std::string name() const override { return "short"; }
  [[nodiscard]] Capabilities capabilities() const override {
    auto c = inner_.capabilities();
    c.context_limit = limit_;
    return c;
  }
  [[nodiscard]] ScorerResponse score(const ScorerQuery& q) const override {
    if (q.sequence.size() > limit_) throw ContextError("too long");
    return inner_.score(q);
  }

 private:
  UniformScorer inner_;
  std::size_t limit_;
};

std::shared_ptr<NativeModelScorer> small_conv() {
  ToyConvConfig c;
  c.layers = 2;
  c.channels = 16;
  c.seed = 3;
  return std::make_shared<NativeModelScorer>(std::make_shared<ToyConvLm>(c), protein());
}

TEST(Probes, SpacedPositions) {
  EXPECT_EQ(spaced_positions(10, 3, false), (std::vector<std::size_t>{1, 5, 8}));
  for (std::size_t p : spaced_positions(50, 8, true)) EXPECT_GE(p, 1u);
  EXPECT_EQ(spaced_positions(3, 10, false).size(), 3u);
  EXPECT_TRUE(spaced_positions(1, 4, true).empty());
}

TEST(Probes, DoublingUniformAndOracle) {
  auto corpus = random_corpus(20, 40, 120, protein(), 5);
  UniformScorer uniform(protein());
  auto ru = run_doubling(uniform, corpus, {});
  for (const auto& r : ru.rows) {
    EXPECT_EQ(r.metric_value("pppl_1x"), 20.0);
    EXPECT_EQ(r.metric_value("pppl_nx"), 20.0);
  }
  RetrievalOracle oracle(protein(), {});
  auto ro = run_doubling(oracle, corpus, {});
  for (const auto& r : ro.rows) {
    EXPECT_EQ(r.metric_value("pppl_1x"), 20.0);
    EXPECT_NEAR(r.metric_value("pppl_nx"), 1.0, 1e-9);
  }
  DoublingConfig ofs;
  ofs.mode = ProfileMode::ofs;
  auto rofs = run_doubling(oracle, corpus, ofs);
  EXPECT_EQ(rofs.scorer_queries, 2 * corpus.size());
  for (const auto& r : rofs.rows) EXPECT_NEAR(r.metric_value("pppl_nx"), 1.0, 1e-9);
}

TEST(Probes, DoublingMatchesSweepCell) {
  const std::uint64_t seed = 77;
  auto scorer = small_conv();
  MultiplicitySweepConfig sweep;
  sweep.unit_sizes = {30};
  sweep.multiplicities = {2};
  sweep.samples = 4;
  ProbeContext ctx{seed, 1, 64};
  auto rs = run_multiplicity_sweep(*scorer, protein(), sweep, ctx);
  DoublingConfig dc;
  dc.exclude_first = false;
  auto rd = run_doubling(*scorer, random_corpus(4, 30, 30, protein(), seed), dc, ctx);
  ASSERT_EQ(rs.rows.size(), rd.rows.size());
  for (std::size_t k = 0; k < rs.rows.size(); ++k) {
    EXPECT_EQ(rs.rows[k].key_value("id"), rd.rows[k].key_value("id"));
    EXPECT_EQ(rs.rows[k].metric_value("pppl"), rd.rows[k].metric_value("pppl_nx"));
  }
}

TEST(Probes, SweepFlagsContextOverflow) {
  ShortContextScorer s(protein(), 100);
  MultiplicitySweepConfig cfg;
  cfg.samples = 2;
  auto r = run_multiplicity_sweep(s, protein(), cfg);
  std::size_t flagged = 0;
  for (const auto& row : r.rows) {
    const bool over = std::stoul(row.key_value("unit")) * std::stoul(row.key_value("multiplicity")) > 100;
    EXPECT_EQ(row.flag == "exceeds context", over);
    flagged += over;
    if (!over) {
      EXPECT_EQ(row.metric_value("pppl"), 20.0);
    }
  }
  EXPECT_EQ(r.flagged_rows(), flagged);
  EXPECT_TRUE(r.partial());
  auto csv = r.to_csv();
  EXPECT_NE(csv.find("exceeds context"), std::string::npos);
}

TEST(Probes, EquivalentMaskQuartets) {
  auto corpus = random_corpus(30, 40, 100, protein(), 9);
  RetrievalOracle oracle(protein(), {});
  auto res = run_equivalent_mask(oracle, corpus, {});
  ASSERT_FALSE(res.quartets.empty());
  for (const auto& q : res.quartets) {
    EXPECT_NEAR(q.single, std::log(20.0), 1e-9);
    EXPECT_NEAR(q.doubled, 0.0, 1e-9);
    EXPECT_NEAR(q.equivalent_masked, std::log(20.0), 1e-9);
    EXPECT_NEAR(q.other_masked, 0.0, 1e-9);
    EXPECT_NE(q.other_mask, q.position);
  }
  UniformScorer uniform(protein());
  auto ru = run_equivalent_mask(uniform, corpus, {});
  EXPECT_EQ(ru.report.notes.at("skipped_sequences"), "0");
  for (const auto& q : ru.quartets) EXPECT_NEAR(q.doubled, std::log(20.0), 1e-12);
}

TEST(Probes, EquivalentMaskOtherMaskInSecondCopy) {
  auto corpus = random_corpus(10, 30, 30, protein(), 4);
  UniformScorer uniform(protein());
  auto res = run_equivalent_mask(uniform, corpus, {});
  for (const auto& q : res.quartets) {
    EXPECT_GE(q.other_mask, 30u);
    EXPECT_LT(q.other_mask, 60u);
    EXPECT_NE(q.other_mask, 30u + q.position);
  }
}

TEST(Probes, EquivalentMaskFilterSkipsLowPerplexity) {
  // The oracle's OFS pppl of a doubled unit is 1, so it is filtered.
  auto x = random_sequence(40, protein(), 2, "unit");
  std::vector<Sequence> corpus{multiply(x, 2), random_sequence(40, protein(), 3, "plain")};
  RetrievalOracle oracle(protein(), {});
  auto res = run_equivalent_mask(oracle, corpus, {});
  EXPECT_EQ(res.report.notes.at("skipped_sequences"), "1");
  for (const auto& q : res.quartets) EXPECT_EQ(q.id, "plain");
}

TEST(Probes, FlipMatrixOracleIdentityUniformFlat) {
  auto corpus = random_corpus(10, 50, 80, protein(), 12);
  RetrievalOracle oracle(protein(), {});
  auto fo = run_flip_matrix(oracle, corpus, {});
  ASSERT_TRUE(fo.matrix.valid);
  for (std::size_t a = 0; a < 20; ++a)
    for (std::size_t b = 0; b < 20; ++b) EXPECT_NEAR(fo.matrix.at(a, b), a == b ? 1.0 : 0.0, 1e-9);
  UniformScorer uniform(protein());
  auto fu = run_flip_matrix(uniform, corpus, {});
  for (double v : fu.matrix.values) EXPECT_EQ(v, 0.05);
  EXPECT_EQ(fu.report.rows.size(), 20u);
  EXPECT_EQ(fu.report.rows[3].key_value("substituted"), "E");
}

TEST(Probes, ContralateralUniformAllTies) {
  UniformScorer uniform(protein());
  ContralateralConfig cfg;
  cfg.samples = 10;
  auto r = run_contralateral(uniform, protein(), cfg);
  ASSERT_EQ(r.curve.size(), 30u);
  for (const auto& p : r.curve) {
    EXPECT_EQ(p.ties, 10u);
    EXPECT_FALSE(p.fraction_right.has_value());
  }
}

TEST(Probes, ContralateralOracleCountsSum) {
  RetrievalOracle oracle(protein(), {});
  ContralateralConfig cfg;
  cfg.samples = 20;
  auto r = run_contralateral(oracle, protein(), cfg);
  for (const auto& p : r.curve) {
    EXPECT_EQ(p.right + p.left + p.ties, 20u);
    if (p.fraction_right) {
      EXPECT_GE(*p.fraction_right, 0.0);
      EXPECT_LE(*p.fraction_right, 1.0);
    }
  }
}

TEST(Probes, ImperfectRepeatUniform) {
  auto corpus = random_corpus(5, 40, 60, protein(), 21);
  UniformScorer uniform(protein());
  ImperfectRepeatConfig cfg;
  cfg.min_pppl = 0.0;
  auto r = run_imperfect_repeat(uniform, corpus, cfg);
  EXPECT_EQ(r.rows.size(), 25u);
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.metric_value("pppl_paired"), 20.0, 1e-9);
    EXPECT_NEAR(row.metric_value("pppl_isolated"), 20.0, 1e-9);
    EXPECT_GT(row.metric_value("edits"), 0.0);
  }
}

TEST(Probes, ImperfectRepeatOracleDegradesWithEdits) {
  auto corpus = random_corpus(10, 150, 200, protein(), 31);
  RetrievalOracle oracle(protein(), {});
  ImperfectRepeatConfig cfg;
  cfg.proportions = {0.02, 0.5};
  auto r = run_imperfect_repeat(oracle, corpus, cfg);
  double low = 0.0;
  double high = 0.0;
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.metric_value("pppl_isolated"), 20.0);
    (row.key_value("proportion") == "0.02" ? low : high) += std::log(row.metric_value("pppl_paired"));
  }
  EXPECT_LT(low, high);
}

TEST(Probes, NeedleHaystackOracle) {
  RetrievalOracle oracle(protein(), {});
  NeedleConfig cfg;
  cfg.haystack_sizes = {0, 100, 480};
  cfg.samples = 3;
  auto r = run_needle_haystack(oracle, protein(), cfg);
  for (const auto& row : r.rows) {
    ASSERT_TRUE(row.flag.empty());
    EXPECT_NEAR(row.metric_value("pppl_needle1"), 1.0, 1e-9);
    EXPECT_NEAR(row.metric_value("pppl_needle2"), 1.0, 1e-9);
    if (row.key_value("haystack") == "0") {
      EXPECT_TRUE(std::isnan(row.metric_value("pppl_haystack")));
    }
  }
  ShortContextScorer s(protein(), 200);
  auto rs = run_needle_haystack(s, protein(), cfg);
  EXPECT_TRUE(rs.partial());
}

TEST(Probes, SkipUniformAndStrictOracle) {
  UniformScorer uniform(protein());
  SkipConfig cfg;
  cfg.samples = 4;
  auto r = run_skip(uniform, protein(), cfg);
  EXPECT_EQ(r.rows.size(), 2u * 2u * cfg.length);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.metric_value("p_true"), 0.05);
    EXPECT_EQ(row.metric_value("p_equivalent"), 0.05);
  }
  OracleConfig oc;
  oc.contiguous = true;
  RetrievalOracle strict(protein(), oc);
  auto rs = run_skip(strict, protein(), cfg);
  for (const auto& row : rs.rows) EXPECT_EQ(row.metric_value("p_true"), 0.05);
}

TEST(Probes, ContextTransformOracle) {
  RetrievalOracle oracle(rna(), {});
  ContextTransformConfig cfg;
  cfg.samples = 5;
  auto r = run_context_transform(oracle, rna(), cfg);
  for (const auto& row : r.rows) {
    const auto& t = row.key_value("transform");
    if (t == "repeat") {
      EXPECT_NEAR(row.metric_value("pppl"), 1.0, 1e-9);
    } else if (t == "none") {
      EXPECT_EQ(row.metric_value("pppl"), 4.0);
    }
  }
  EXPECT_THROW(run_context_transform(oracle, protein(), cfg), InvalidArgument);
  // Without complement transforms any alphabet is accepted.
  cfg.transforms = {ContextTransform::none, ContextTransform::repeat, ContextTransform::reversed};
  RetrievalOracle protein_oracle(protein(), {});
  EXPECT_EQ(run_context_transform(protein_oracle, protein(), cfg).rows.size(), 15u);
}

TEST(Probes, ContextTransformUniform) {
  UniformScorer uniform(rna());
  ContextTransformConfig cfg;
  cfg.samples = 3;
  auto r = run_context_transform(uniform, rna(), cfg);
  EXPECT_EQ(r.rows.size(), 18u);
  for (const auto& row : r.rows) EXPECT_NEAR(row.metric_value("pppl"), 4.0, 1e-12);
}

TEST(Probes, WorkerCountDoesNotChangeContent) {
  auto scorer = small_conv();
  auto corpus = random_corpus(8, 20, 40, protein(), 17);
  ProbeContext one{5, 1, 64};
  ProbeContext four{5, 4, 64};
  auto a = run_doubling(*scorer, corpus, {}, one);
  auto b = run_doubling(*scorer, corpus, {}, four);
  a.sort_rows();
  b.sort_rows();
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  auto ea = run_equivalent_mask(*scorer, corpus, {}, one).report;
  auto eb = run_equivalent_mask(*scorer, corpus, {}, four).report;
  EXPECT_EQ(ea.to_csv(), eb.to_csv());
}

TEST(Probes, RerunIsByteIdentical) {
  RetrievalOracle oracle(protein(), {});
  NeedleConfig cfg;
  cfg.samples = 2;
  cfg.haystack_sizes = {0, 50};
  ProbeContext ctx{9, 2, 64};
  auto dir = std::filesystem::temp_directory_path() / "ctxprobe_rerun";
  std::filesystem::create_directories(dir);
  write_report(run_needle_haystack(oracle, protein(), cfg, ctx), dir / "a", {2});
  write_report(run_needle_haystack(oracle, protein(), cfg, ctx), dir / "b", {1});
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.run.json"));
  std::filesystem::remove_all(dir);
}

TEST(Report, JsonRoundTrip) {
  ProbeReport r;
  r.probe = "demo";
  r.scorer = "x";
  r.seed = 3;
  r.scorer_queries = 12;
  r.config = {{"k", 1}};
  r.notes["n"] = "v";
  ReportRow a;
  a.key("id", std::string("s,1")).metric("v", 0.1).metric("w", std::nan(""));
  ReportRow b;
  b.key("id", std::string("s2")).metric("v", HUGE_VAL);
  b.flag = "exceeds context";
  r.rows = {a, b};
  auto back = ProbeReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json().dump(), r.to_json().dump());
  EXPECT_EQ(back.rows[0].metric_value("v"), 0.1);
  EXPECT_TRUE(std::isnan(back.rows[0].metric_value("w")));
  EXPECT_EQ(back.rows[1].metric_value("v"), HUGE_VAL);
  EXPECT_EQ(back.rows[1].flag, "exceeds context");
  EXPECT_EQ(r.to_json()["schema_version"], kReportSchemaVersion);
}

TEST(Report, CsvLayout) {
  ProbeReport r;
  ReportRow a;
  a.key("id", std::string("s,1")).metric("v", 0.1);
  ReportRow b;
  b.key("id", std::string("t")).metric("w", 2.0);
  r.rows = {a, b};
  std::istringstream in(r.to_csv());
  std::string header;
  std::string first;
  std::string second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "id,v,w,flag");
  EXPECT_EQ(first, "\"s,1\",0.1,,");
  EXPECT_EQ(second, "t,,2,");
}

TEST(Report, FormatNumberRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 20.0, -2.5e17}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(20.0), "20");
}

TEST(Parallel, RunsEveryIndexAndRethrows) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t k) { hit[k] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t k) {
                 if (k == 7) throw InvalidArgument("boom");
               }),
               InvalidArgument);
}

TEST(Svg, QuicklooksWrite) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2}, 0.25), 1.25);
  UniformScorer uniform(protein());
  auto dir = std::filesystem::temp_directory_path() / "ctxprobe_svg";
  std::filesystem::create_directories(dir);
  auto corpus = random_corpus(4, 30, 40, protein(), 1);
  EXPECT_TRUE(write_quicklook(run_doubling(uniform, corpus, {}), dir / "d"));
  EXPECT_TRUE(write_quicklook(run_flip_matrix(uniform, corpus, {}).report, dir / "f"));
  SkipConfig sc;
  sc.samples = 2;
  EXPECT_TRUE(write_quicklook(run_skip(uniform, protein(), sc), dir / "s"));
  std::ifstream in(dir / "f.svg");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first.rfind("<svg", 0), 0u);
  ProbeReport other;
  other.probe = "unknown";
  EXPECT_FALSE(write_quicklook(other, dir / "u"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace ctxprobe
