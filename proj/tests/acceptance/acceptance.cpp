// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Trains both standard fixtures, so a full run takes 12-20 minutes
// on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctxprobe/embedprobe/embedprobe.hpp"
#include "ctxprobe/models/attention_lm.hpp"
#include "ctxprobe/models/conv_lm.hpp"
#include "ctxprobe/models/fixtures.hpp"
#include "ctxprobe/models/native_scorer.hpp"
#include "ctxprobe/models/oracle.hpp"
#include "ctxprobe/models/reference_scorers.hpp"
#include "ctxprobe/models/train.hpp"
#include "ctxprobe/probes/probes.hpp"
#include "ctxprobe/scoring/metrics.hpp"
#include "ctxprobe/seqcore/generate.hpp"

namespace ctxprobe {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AlphabetPtr protein() { return make_alphabet(Alphabet::protein()); }

struct Gate {
  int failures = 0;
  // Criteria named on the command line; all when empty.
  std::vector<std::string> only;

  [[nodiscard]] bool selected(const std::string& name) const {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  }

  void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }

  // Runs a criterion, turning an escaped exception into a failure line.
  void run(const std::string& name, const std::function<bool(std::string&)>& body) {
    if (!selected(name)) return;
    std::string detail;
    bool pass = false;
    try {
      pass = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    report(name, pass, detail);
  }
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

bool oracle_collapse(std::string& detail) {
  const auto t0 = Clock::now();
  RetrievalOracle oracle(protein());
  auto corpus = random_corpus(200, 50, 300, protein(), 101);
  DoublingConfig cfg;
  cfg.exclude_first = false;
  auto report = run_doubling(oracle, corpus, cfg, {.seed = 1});
  double worst_doubled = 0.0;
  bool single_exact = true;
  for (const auto& row : report.rows) {
    worst_doubled = std::max(worst_doubled, std::abs(row.metric_value("pppl_nx") - 1.0));
    single_exact = single_exact && row.metric_value("pppl_1x") == 20.0;
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("rows %.0f, max |pppl_2x - 1| %.3g, single-copy all 20: %.0f, %.1fs", double(report.rows.size()),
               worst_doubled, single_exact ? 1.0 : 0.0, elapsed);
  return report.rows.size() == 200 && worst_doubled <= 1e-9 && single_exact && elapsed < 60.0;
}

DistributionMatrix profile_with_true_probs(const Sequence& x, const std::vector<double>& p) {
  const std::size_t a = x.alphabet().size();
  DistributionMatrix m(a);
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> row(a, (1.0 - p[i]) / static_cast<double>(a - 1));
    row[x[i]] = p[i];
    m.append(i, row);
  }
  return m;
}

bool score_math(std::string& detail) {
  auto two = Sequence::from_string("two", "AC", protein());
  const double pppl = pseudo_perplexity(profile_with_true_probs(two, {0.5, 0.125}), two);
  const double h = entropy(std::vector<double>(20, 1.0 / 20.0));
  auto three = Sequence::from_string("three", "ACD", protein());
  const double causal = causal_perplexity(CausalTableScorer({0.5, 0.25, 0.5}), three);
  const double h_err = std::abs(h - std::log(20.0));
  const double c_err = std::abs(causal - std::pow(2.0, 4.0 / 3.0));
  detail = fmt("pppl %.17g, |H - ln 20| %.3g, |causal - 2^(4/3)| %.3g", pppl, h_err, c_err);
  return pppl == 4.0 && h_err <= 1e-12 && c_err <= 1e-12;
}

bool equivalent_mask(std::string& detail) {
  RetrievalOracle oracle(protein());
  auto corpus = random_corpus(130, 50, 300, protein(), 202);
  EquivalentMaskConfig cfg;
  auto result = run_equivalent_mask(oracle, corpus, cfg, {.seed = 2});
  const double h = std::log(20.0);
  double worst = 0.0;
  for (const auto& q : result.quartets) {
    worst = std::max({worst, std::abs(q.single - h), std::abs(q.doubled), std::abs(q.equivalent_masked - h),
                      std::abs(q.other_masked)});
  }
  detail = fmt("quartets %.0f, max deviation from (ln 20, 0, ln 20, 0) %.3g", double(result.quartets.size()), worst);
  return result.quartets.size() >= 1000 && worst <= 1e-9;
}

bool flip_matrix(std::string& detail) {
  auto corpus = random_corpus(40, 50, 200, protein(), 303);
  RetrievalOracle oracle(protein());
  auto o = run_flip_matrix(oracle, corpus, {}, {.seed = 3}).matrix;
  double oracle_err = 0.0;
  for (std::size_t a = 0; a < o.width; ++a)
    for (std::size_t b = 0; b < o.width; ++b) oracle_err = std::max(oracle_err, std::abs(o.at(a, b) - (a == b)));
  UniformScorer uniform(protein());
  auto u = run_flip_matrix(uniform, corpus, {}, {.seed = 3}).matrix;
  std::size_t off = 0;
  for (double v : u.values) off += v != 1.0 / 20.0;
  detail = fmt("oracle max |M - I| %.3g, uniform entries != 1/20: %.0f", oracle_err, double(off));
  return o.width == 20 && o.valid && u.valid && oracle_err <= 1e-9 && off == 0;
}

// Random tokens with every third position masked and soft random targets.
GradCheckResult check_model(MaskedLm& model, std::size_t length, std::uint64_t seed) {
  const std::size_t a = model.alphabet_size();
  Rng rng(seed);
  std::vector<int> tokens(length);
  for (int& t : tokens) t = static_cast<int>(rng.index(a));
  TargetSet targets;
  for (std::size_t i = 1; i < length; i += 3) {
    tokens[i] = model.mask_token();
    targets.positions.push_back(i);
  }
  targets.distributions = Matrix(static_cast<Eigen::Index>(targets.positions.size()), static_cast<Eigen::Index>(a));
  for (Eigen::Index r = 0; r < targets.distributions.rows(); ++r) {
    for (Eigen::Index c = 0; c < targets.distributions.cols(); ++c) targets.distributions(r, c) = rng.unit() + 0.05;
    targets.distributions.row(r) /= targets.distributions.row(r).sum();
  }
  return grad_check(model, tokens, targets, 300, 1e-5, seed);
}

bool gradients(std::string& detail) {
  const auto t0 = Clock::now();
  auto attention = standard_fixture(FixtureKind::attention).make_model();
  auto conv = standard_fixture(FixtureKind::conv).make_model();
  auto ra = check_model(*attention, 24, 5);
  auto rc = check_model(*conv, 24, 6);
  const double elapsed = seconds_since(t0);
  detail = fmt("attention %.3g over %.0f params, conv %.3g over %.0f params", ra.max_relative_error, double(ra.checked),
               rc.max_relative_error, double(rc.checked)) +
           fmt(", %.1fs", elapsed);
  return ra.checked >= 200 && rc.checked >= 200 && ra.max_relative_error <= 1e-4 && rc.max_relative_error <= 1e-4 &&
         elapsed < 120.0;
}

bool attention_emergence(const Scorer& scorer, std::string& detail) {
  // Held out by seed: the fixture corpus never draws from this stream.
  auto units = random_corpus(100, 30, 30, protein(), 404);
  auto report = run_doubling(scorer, units, {}, {.seed = 4});
  std::vector<double> single, doubled;
  for (const auto& row : report.rows) {
    single.push_back(row.metric_value("pppl_1x"));
    doubled.push_back(row.metric_value("pppl_nx"));
  }
  const double m1 = median(single), m2 = median(doubled);
  detail = fmt("median single %.3f, doubled %.3f, ratio %.3f (limit 0.6)", m1, m2, m2 / m1);
  return report.rows.size() == 100 && m2 <= 0.6 * m1;
}

std::map<std::pair<std::string, std::string>, double> sweep_medians(const ProbeReport& report) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  for (const auto& row : report.rows)
    cells[{row.key_value("unit"), row.key_value("multiplicity")}].push_back(row.metric_value("pppl"));
  std::map<std::pair<std::string, std::string>, double> out;
  for (auto& [k, v] : cells) out[k] = median(v);
  return out;
}

double reduction(const Scorer& scorer, std::size_t unit, std::size_t samples, std::string& detail) {
  MultiplicitySweepConfig cfg;
  cfg.unit_sizes = {unit};
  cfg.multiplicities = {1, 2};
  cfg.samples = samples;
  auto med = sweep_medians(run_multiplicity_sweep(scorer, protein(), cfg, {.seed = 5}));
  const auto u = std::to_string(unit);
  const double m1 = med.at({u, "1"}), m2 = med.at({u, "2"});
  const double r = 1.0 - m2 / m1;
  detail += fmt("unit %.0f median %.3f -> %.3f (reduction %.1f%%)", double(unit), m1, m2, 100.0 * r);
  return r;
}

bool conv_transition(const Scorer& scorer, const MaskedLm& model, std::string& detail) {
  const double r6 = reduction(scorer, 6, 60, detail);
  detail += "; ";
  const double r64 = reduction(scorer, 64, 20, detail);

  const auto& conv = dynamic_cast<const ToyConvLm&>(model);
  const std::size_t half = (conv.config().receptive_field() - 1) / 2;
  Rng rng(6);
  std::vector<int> tokens(80);
  for (int& t : tokens) t = static_cast<int>(rng.index(model.alphabet_size()));
  const Matrix base = model.forward(tokens).logits;
  std::size_t leaks = 0, compared = 0;
  for (std::size_t j = 0; j < tokens.size(); j += 7) {
    auto changed = tokens;
    changed[j] = (changed[j] + 1) % static_cast<int>(model.alphabet_size());
    const Matrix out = model.forward(changed).logits;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if ((i > j ? i - j : j - i) <= half) continue;
      ++compared;
      const auto r = static_cast<Eigen::Index>(i);
      leaks += !(out.row(r).array() == base.row(r).array()).all();
    }
  }
  detail += fmt("; rows beyond distance %.0f changed: %.0f of %.0f", double(half), double(leaks), double(compared));
  return r6 >= 0.25 && r64 < 0.05 && leaks == 0 && compared > 0;
}

bool embedding_regression(const Scorer& scorer, std::string& detail) {
  auto spec = standard_fixture(FixtureKind::attention).corpus;
  spec.seed = 99;
  auto corpus = sample_corpus(spec, 60);
  auto sets = extract_training_sets(scorer, corpus, build_groups(corpus, 7));
  EvaluationConfig ec;
  ec.seed = 3;
  auto result = train_and_evaluate(sets, MlpSpec{}, ec);
  double one_hot = 0.0, single = 0.0;
  bool above_entropy = true;
  std::size_t failed = 0;
  for (const auto& g : result.groups) {
    if (g.spec.kind == GroupKind::one_hot) one_hot = g.mean_validation_loss;
    if (g.spec.kind == GroupKind::baseline) single = g.mean_validation_loss;
    above_entropy = above_entropy && g.mean_validation_loss >= g.mean_target_entropy;
    failed += g.failed_splits;
    std::printf("  %-16s val %.4f  H %.4f\n", g.spec.name().c_str(), g.mean_validation_loss, g.mean_target_entropy);
  }
  detail = fmt("one-hot %.4f vs 1x %.4f; CE >= H in every group: %.0f; failed splits %.0f", one_hot, single,
               above_entropy ? 1.0 : 0.0, double(failed));
  return one_hot > single && above_entropy && failed == 0 && result.groups.size() == 10;
}

// Sorted CSV, which drops run-order effects but keeps every value.
std::string sorted_csv(ProbeReport r) {
  r.sort_rows();
  return r.to_csv();
}

bool determinism(std::string& detail) {
  RetrievalOracle oracle(protein());
  ToyConvConfig cc;
  cc.channels = 8;
  cc.seed = 9;
  NativeModelScorer conv(std::make_shared<ToyConvLm>(cc), protein());
  // The context-transform probe needs a complement, so it runs on RNA.
  auto rna = make_alphabet(Alphabet::rna());
  RetrievalOracle rna_oracle(rna);
  cc.alphabet_size = rna->size();
  NativeModelScorer rna_conv(std::make_shared<ToyConvLm>(cc), rna);
  auto rna_for = [&](const Scorer& s) -> const Scorer& {
    return &s == &oracle ? static_cast<const Scorer&>(rna_oracle) : rna_conv;
  };
  auto corpus = random_corpus(6, 30, 60, protein(), 505);

  MultiplicitySweepConfig sweep;
  sweep.unit_sizes = {8, 20};
  sweep.multiplicities = {1, 2, 3};
  sweep.samples = 3;
  ContralateralConfig contra;
  contra.samples = 10;
  NeedleConfig needle;
  needle.needle_sizes = {10};
  needle.haystack_sizes = {0, 40};
  needle.samples = 2;
  SkipConfig skip;
  skip.samples = 4;
  ContextTransformConfig transform;
  transform.samples = 3;
  ImperfectRepeatConfig imperfect;
  imperfect.min_pppl = 0.0;

  std::vector<std::pair<std::string, std::function<ProbeReport(const Scorer&, const ProbeContext&)>>> probes = {
      {"doubling", [&](const Scorer& s, const ProbeContext& c) { return run_doubling(s, corpus, {}, c); }},
      {"multiplicity", [&](const Scorer& s, const ProbeContext& c) { return run_multiplicity_sweep(s, protein(), sweep, c); }},
      {"equivalent_mask",
       [&](const Scorer& s, const ProbeContext& c) {
         EquivalentMaskConfig e;
         e.min_pppl = 0.0;
         return run_equivalent_mask(s, corpus, e, c).report;
       }},
      {"flip_matrix", [&](const Scorer& s, const ProbeContext& c) { return run_flip_matrix(s, corpus, {}, c).report; }},
      {"contralateral", [&](const Scorer& s, const ProbeContext& c) { return run_contralateral(s, protein(), contra, c).report; }},
      {"imperfect_repeat", [&](const Scorer& s, const ProbeContext& c) { return run_imperfect_repeat(s, corpus, imperfect, c); }},
      {"needle_haystack", [&](const Scorer& s, const ProbeContext& c) { return run_needle_haystack(s, protein(), needle, c); }},
      {"skip", [&](const Scorer& s, const ProbeContext& c) { return run_skip(s, protein(), skip, c); }},
      {"context_transform",
       [&](const Scorer& s, const ProbeContext& c) { return run_context_transform(rna_for(s), rna, transform, c); }},
  };

  std::vector<std::string> broken;
  std::size_t runs = 0;
  for (const Scorer* scorer : {static_cast<const Scorer*>(&oracle), static_cast<const Scorer*>(&conv)}) {
    for (const auto& [name, probe] : probes) {
      const auto first = probe(*scorer, {.seed = 17, .workers = 1});
      const auto again = probe(*scorer, {.seed = 17, .workers = 1});
      const auto wide = probe(*scorer, {.seed = 17, .workers = 4});
      runs += 3;
      if (first.to_json().dump() != again.to_json().dump() || first.to_csv() != again.to_csv())
        broken.push_back(scorer->name() + "/" + name + " rerun");
      if (sorted_csv(first) != sorted_csv(wide)) broken.push_back(scorer->name() + "/" + name + " workers");
    }
  }
  detail = fmt("%.0f probe runs over 2 scorers", double(runs));
  for (const auto& b : broken) detail += "; differs: " + b;
  return broken.empty();
}

}  // namespace
}  // namespace ctxprobe

int main(int argc, char** argv) {
  using namespace ctxprobe;
  Gate gate;
  gate.only.assign(argv + 1, argv + argc);
  const auto t0 = Clock::now();

  gate.run("oracle-collapse", oracle_collapse);
  gate.run("score-math", score_math);
  gate.run("equivalent-mask-quartet", equivalent_mask);
  gate.run("flip-matrix", flip_matrix);
  gate.run("gradient-check", gradients);
  gate.run("determinism", determinism);

  std::shared_ptr<MaskedLm> attention;
  gate.run("toy-attention-icl", [&](std::string& detail) {
    const auto t = Clock::now();
    auto trained = train_fixture(standard_fixture(FixtureKind::attention));
    attention = trained.model;
    const double train_s = seconds_since(t);
    NativeModelScorer scorer(attention, protein());
    const bool pass = attention_emergence(scorer, detail);
    detail += fmt("; trained in %.0fs", train_s);
    return pass;
  });

  gate.run("toy-conv-receptive-field", [&](std::string& detail) {
    const auto t = Clock::now();
    auto trained = train_fixture(standard_fixture(FixtureKind::conv));
    const double train_s = seconds_since(t);
    NativeModelScorer scorer(trained.model, protein());
    const bool pass = conv_transition(scorer, *trained.model, detail);
    detail += fmt("; trained in %.0fs", train_s);
    return pass;
  });

  if (gate.selected("embedding-regression") && !gate.selected("toy-attention-icl")) {
    attention = train_fixture(standard_fixture(FixtureKind::attention)).model;
  }
  gate.run("embedding-regression", [&](std::string& detail) {
    if (!attention) {
      detail = "attention fixture unavailable";
      return false;
    }
    return embedding_regression(NativeModelScorer(attention, protein()), detail);
  });

  std::printf("%s: %d failed, %.0fs\n", gate.failures ? "FAIL" : "PASS", gate.failures, seconds_since(t0));
  return gate.failures ? 1 : 0;
}
