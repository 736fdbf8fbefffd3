#include "ctxprobe/probes/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxprobe/error.hpp"
#include "ctxprobe/probes/parallel.hpp"
#include "ctxprobe/seqcore/generate.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {
namespace {

// Seed-path tags keep the probes' random streams apart.
enum : std::uint64_t {
  kTagEquivalent = 0xE9,
  kTagContralateral = 0xC0,
  kTagImperfect = 0x1B,
  kTagNeedle = 0x4E,
  kTagSkip = 0x5C,
  kTagTransform = 0x7F,
};

std::size_t worker_count(const Scorer& scorer, const ProbeContext& ctx) {
  return scorer.capabilities().concurrent ? std::max<std::size_t>(1, ctx.workers) : 1;
}

std::vector<std::size_t> range_positions(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> p(end > begin ? end - begin : 0);
  std::iota(p.begin(), p.end(), begin);
  return p;
}

// Profile over `positions` (every position when empty).
DistributionMatrix profile(const Scorer& scorer, const Sequence& x, ProfileMode mode, const ProbeContext& ctx,
                           std::vector<std::size_t> positions = {}) {
  if (mode == ProfileMode::ofs) return ofs_profile(scorer, x);
  ProfileOptions opt;
  opt.batch_size = ctx.batch_size;
  opt.positions = std::move(positions);
  return one_at_a_time_profile(scorer, x, opt);
}

// Maps expected scorer failures to a row flag; anything else propagates.
template <typename Fn>
std::string flag_failures(Fn&& fn) {
  try {
    fn();
    return {};
  } catch (const ContextError&) {
    return "exceeds context";
  } catch (const ScorerError& e) {
    return std::string("scorer error: ") + e.what();
  } catch (const TransportError& e) {
    return std::string("transport error: ") + e.what();
  } catch (const ProtocolError& e) {
    return std::string("protocol error: ") + e.what();
  }
}

double filter_pppl(const Scorer& scorer, const Sequence& x) {
  return pseudo_perplexity(ofs_profile(scorer, x), x);
}

nlohmann::json sizes_json(const std::vector<std::size_t>& v) { return nlohmann::json(v); }

}  // namespace

std::string mode_name(ProfileMode m) { return m == ProfileMode::ofs ? "ofs" : "one-at-a-time"; }

ProfileMode mode_from_name(const std::string& s) {
  if (s == "ofs") return ProfileMode::ofs;
  if (s == "one-at-a-time") return ProfileMode::one_at_a_time;
  throw InvalidArgument("unknown profile mode '" + s + "'");
}

std::vector<std::size_t> spaced_positions(std::size_t length, std::size_t count, bool exclude_first) {
  const std::size_t first = exclude_first ? 1 : 0;
  if (length <= first || count == 0) return {};
  const std::size_t avail = length - first;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) {
    const auto p = first + static_cast<std::size_t>((static_cast<double>(k) + 0.5) * static_cast<double>(avail) /
                                                    static_cast<double>(count));
    if (out.empty() || out.back() != p) out.push_back(std::min(p, length - 1));
  }
  return out;
}

nlohmann::json DoublingConfig::to_json() const {
  return {{"multiplicity", multiplicity}, {"mode", mode_name(mode)}, {"exclude_first", exclude_first}};
}

ProbeReport run_doubling(const Scorer& scorer, const std::vector<Sequence>& corpus, const DoublingConfig& cfg,
                         const ProbeContext& ctx) {
  if (corpus.empty()) throw InvalidArgument("doubling probe needs a nonempty corpus");
  if (cfg.multiplicity < 1) throw InvalidArgument("multiplicity must be at least 1");
  CountingScorer counter(scorer);
  std::vector<ReportRow> rows(corpus.size());
  parallel_for(corpus.size(), worker_count(scorer, ctx), [&](std::size_t k) {
    const Sequence& x = corpus[k];
    ReportRow& row = rows[k];
    row.key("id", x.id()).metric("length", static_cast<double>(x.size()));
    const std::size_t first = cfg.exclude_first ? 1 : 0;
    if (x.size() <= first) {
      row.flag = "too short";
      return;
    }
    row.flag = flag_failures([&] {
      const Sequence y = multiply(x, cfg.multiplicity);
      const auto px = range_positions(first, x.size());
      const auto py = range_positions(first, y.size());
      const auto single = pseudo_perplexity_detail(profile(counter, x, cfg.mode, ctx, px), x, std::span<const std::size_t>(px));
      const auto multi = pseudo_perplexity_detail(profile(counter, y, cfg.mode, ctx, py), y, std::span<const std::size_t>(py));
      row.metric("pppl_1x", single.value)
          .metric("pppl_nx", multi.value)
          .metric("floored_1x", static_cast<double>(single.floored_rows))
          .metric("floored_nx", static_cast<double>(multi.floored_rows));
    });
  });
  ProbeReport r{"doubling", 1, scorer.name(), cfg.to_json(), std::move(rows), ctx.seed, counter.queries(), {}};
  return r;
}

MultiplicitySweepConfig MultiplicitySweepConfig::short_units() {
  MultiplicitySweepConfig c;
  c.unit_sizes = {5, 6, 7, 8, 9};
  c.multiplicities = {1, 2, 4, 8, 16, 32};
  return c;
}

nlohmann::json MultiplicitySweepConfig::to_json() const {
  return {{"unit_sizes", sizes_json(unit_sizes)},
          {"multiplicities", sizes_json(multiplicities)},
          {"samples", samples},
          {"mode", mode_name(mode)}};
}

ProbeReport run_multiplicity_sweep(const Scorer& scorer, const AlphabetPtr& alphabet,
                                   const MultiplicitySweepConfig& cfg, const ProbeContext& ctx) {
  if (cfg.unit_sizes.empty() || cfg.multiplicities.empty() || cfg.samples == 0)
    throw InvalidArgument("multiplicity sweep needs unit sizes, multiplicities and samples");
  struct Cell {
    std::size_t unit, mult, sample;
  };
  std::vector<Cell> cells;
  for (std::size_t u : cfg.unit_sizes)
    for (std::size_t m : cfg.multiplicities)
      for (std::size_t s = 0; s < cfg.samples; ++s) cells.push_back({u, m, s});
  const auto limit = scorer.capabilities().context_limit;
  CountingScorer counter(scorer);
  std::vector<ReportRow> rows(cells.size());
  parallel_for(cells.size(), worker_count(scorer, ctx), [&](std::size_t k) {
    const Cell& c = cells[k];
    ReportRow& row = rows[k];
    const Sequence unit = random_member(c.unit, c.unit, alphabet, ctx.seed, c.sample);
    row.key("unit", c.unit).key("multiplicity", c.mult).key("sample", c.sample).key("id", unit.id());
    if (limit && c.unit * c.mult > *limit) {
      row.flag = "exceeds context";
      return;
    }
    row.flag = flag_failures([&] {
      const Sequence y = multiply(unit, c.mult);
      const auto d = pseudo_perplexity_detail(profile(counter, y, cfg.mode, ctx), y);
      row.metric("pppl", d.value).metric("floored", static_cast<double>(d.floored_rows));
    });
  });
  return ProbeReport{"multiplicity", 1, scorer.name(), cfg.to_json(), std::move(rows), ctx.seed, counter.queries(), {}};
}

nlohmann::json EquivalentMaskConfig::to_json() const {
  return {{"positions_per_sequence", positions_per_sequence}, {"exclude_first", exclude_first}, {"min_pppl", min_pppl}};
}

EquivalentMaskResult run_equivalent_mask(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                         const EquivalentMaskConfig& cfg, const ProbeContext& ctx) {
  if (corpus.empty()) throw InvalidArgument("equivalent-mask probe needs a nonempty corpus");
  CountingScorer counter(scorer);
  std::vector<std::vector<EntropyQuartet>> per_seq(corpus.size());
  std::vector<std::string> flags(corpus.size());
  std::vector<char> filtered(corpus.size(), 0);
  parallel_for(corpus.size(), worker_count(scorer, ctx), [&](std::size_t k) {
    const Sequence& x = corpus[k];
    if (x.size() < 3) {
      filtered[k] = 1;
      return;
    }
    flags[k] = flag_failures([&] {
      if (cfg.min_pppl > 0.0 && filter_pppl(counter, x) <= cfg.min_pppl) {
        filtered[k] = 1;
        return;
      }
      const std::size_t n = x.size();
      const Sequence y = multiply(x, 2);
      for (std::size_t i : spaced_positions(n, cfg.positions_per_sequence, cfg.exclude_first)) {
        Rng rng(derive_seed(ctx.seed, {kTagEquivalent, k, i}));
        std::size_t other = n + rng.index(n - 1);
        if (other >= n + i) ++other;  // skip the equivalent position
        auto h = [&](const Sequence& s, std::vector<std::size_t> masked) {
          std::sort(masked.begin(), masked.end());
          auto resp = counter.score(ScorerQuery{s, masked, {}});
          return entropy(resp.distributions.at_position(i));
        };
        per_seq[k].push_back(EntropyQuartet{x.id(), i, other, h(x, {i}), h(y, {i}), h(y, {i, n + i}), h(y, {i, other})});
      }
    });
  });

  EquivalentMaskResult out;
  std::size_t skipped = 0;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    skipped += filtered[k];
    if (!flags[k].empty()) {
      ReportRow row;
      row.key("id", corpus[k].id()).key("position", std::string("-"));
      row.flag = flags[k];
      out.report.rows.push_back(std::move(row));
      continue;
    }
    for (const auto& q : per_seq[k]) {
      out.quartets.push_back(q);
      ReportRow row;
      row.key("id", q.id)
          .key("position", q.position)
          .metric("other_mask", static_cast<double>(q.other_mask))
          .metric("h_single", q.single)
          .metric("h_doubled", q.doubled)
          .metric("h_equivalent_masked", q.equivalent_masked)
          .metric("h_other_masked", q.other_masked);
      out.report.rows.push_back(std::move(row));
    }
  }
  out.report.probe = "equivalent_mask";
  out.report.scorer = scorer.name();
  out.report.config = cfg.to_json();
  out.report.seed = ctx.seed;
  out.report.scorer_queries = counter.queries();
  out.report.notes["skipped_sequences"] = std::to_string(skipped);
  return out;
}

nlohmann::json FlipMatrixConfig::to_json() const {
  return {{"positions_per_sequence", positions_per_sequence}, {"exclude_first", exclude_first}};
}

FlipMatrixResult run_flip_matrix(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                 const FlipMatrixConfig& cfg, const ProbeContext& ctx) {
  if (corpus.empty()) throw InvalidArgument("flip-matrix probe needs a nonempty corpus");
  const std::size_t a = corpus.front().alphabet().size();
  struct Item {
    std::size_t seq, pos;
  };
  std::vector<Item> items;
  for (std::size_t k = 0; k < corpus.size(); ++k)
    for (std::size_t i : spaced_positions(corpus[k].size(), cfg.positions_per_sequence, cfg.exclude_first))
      items.push_back({k, i});
  if (items.empty()) throw InvalidArgument("flip-matrix probe found no positions to sample");

  CountingScorer counter(scorer);
  // Per item: a rows of a predicted probabilities.
  std::vector<std::vector<double>> sums(items.size());
  std::vector<std::string> flags(items.size());
  parallel_for(items.size(), worker_count(scorer, ctx), [&](std::size_t t) {
    const Sequence& x = corpus[items[t].seq];
    const std::size_t i = items[t].pos;
    flags[t] = flag_failures([&] {
      std::vector<Symbol> base(x.symbols().begin(), x.symbols().end());
      base.insert(base.end(), x.symbols().begin(), x.symbols().end());
      std::vector<ScorerQuery> queries;
      for (std::size_t s = 0; s < a; ++s) {
        auto sym = base;
        sym[x.size() + i] = static_cast<Symbol>(s);
        queries.push_back(ScorerQuery{Sequence(x.id() + "_flip", std::move(sym), x.alphabet_ptr()), {i}, {}});
      }
      auto responses = counter.score_batch(queries);
      std::vector<double> acc;
      acc.reserve(a * a);
      for (const auto& r : responses) {
        auto row = r.distributions.at_position(i);
        acc.insert(acc.end(), row.begin(), row.end());
      }
      sums[t] = std::move(acc);
    });
  });

  FlipMatrixResult out;
  FlipMatrix& m = out.matrix;
  m.width = a;
  m.values.assign(a * a, 0.0);
  m.counts.assign(a, 0);
  std::size_t failed = 0;
  for (std::size_t t = 0; t < items.size(); ++t) {
    if (!flags[t].empty()) {
      ++failed;
      continue;
    }
    // Running mean: exact when every sample agrees.
    for (std::size_t s = 0; s < a; ++s) {
      const double c = static_cast<double>(++m.counts[s]);
      for (std::size_t p = 0; p < a; ++p) m.values[s * a + p] += (sums[t][s * a + p] - m.values[s * a + p]) / c;
    }
  }
  m.valid = failed == 0;

  const Alphabet& alpha = corpus.front().alphabet();
  for (std::size_t s = 0; s < a; ++s) {
    ReportRow row;
    row.key("substituted", std::string(1, alpha.symbol(static_cast<Symbol>(s))));
    row.metric("samples", static_cast<double>(m.counts[s]));
    for (std::size_t p = 0; p < a; ++p) row.metric(std::string("p_") + alpha.symbol(static_cast<Symbol>(p)), m.at(s, p));
    if (!m.valid) row.flag = "partial: " + std::to_string(failed) + " samples failed";
    out.report.rows.push_back(std::move(row));
  }
  out.report.probe = "flip_matrix";
  out.report.scorer = scorer.name();
  out.report.config = cfg.to_json();
  out.report.seed = ctx.seed;
  out.report.scorer_queries = counter.queries();
  out.report.notes["sweep"] =
      "every sampled position is swept over the full alphabet at the equivalent position (matrix form)";
  return out;
}

nlohmann::json ContralateralConfig::to_json() const {
  return {{"length", length}, {"samples", samples}, {"tie_tolerance", tie_tolerance}};
}

ContralateralResult run_contralateral(const Scorer& scorer, const AlphabetPtr& alphabet,
                                      const ContralateralConfig& cfg, const ProbeContext& ctx) {
  if (cfg.length < 4) throw InvalidArgument("contralateral probe needs length >= 4");
  if (alphabet->size() < 3) throw InvalidArgument("alphabet too small for two distinct novel symbols");
  const std::size_t n = cfg.length;
  CountingScorer counter(scorer);
  // outcome[s][p]: +1 right, -1 left, 0 tie; 2 marks a failed sample.
  std::vector<std::vector<int>> outcome(cfg.samples, std::vector<int>(n, 0));
  std::vector<std::string> flags(cfg.samples);
  parallel_for(cfg.samples, worker_count(scorer, ctx), [&](std::size_t s) {
    const Sequence x = random_member(n, n, alphabet, derive_seed(ctx.seed, {kTagContralateral}), s);
    flags[s] = flag_failures([&] {
      std::vector<ScorerQuery> queries;
      std::vector<std::pair<Symbol, Symbol>> inserted;
      for (std::size_t p = 0; p < n; ++p) {
        Rng rng(derive_seed(ctx.seed, {kTagContralateral, s, p}));
        const Symbol orig = x[p];
        Symbol left;
        Symbol right;
        do left = static_cast<Symbol>(rng.index(alphabet->size()));
        while (left == orig);
        do right = static_cast<Symbol>(rng.index(alphabet->size()));
        while (right == orig || right == left);
        std::vector<Symbol> sym(x.symbols().begin(), x.symbols().end());
        for (std::size_t q = 0; q < n; ++q) {
          if (q == p) {
            sym.push_back(left);
            sym.push_back(right);
          } else {
            sym.push_back(x[q]);
          }
        }
        queries.push_back(ScorerQuery{Sequence(x.id() + "_ins", std::move(sym), alphabet), {p}, {}});
        inserted.emplace_back(left, right);
      }
      auto responses = counter.score_batch(queries);
      for (std::size_t p = 0; p < n; ++p) {
        auto row = responses[p].distributions.at_position(p);
        const double diff = row[inserted[p].second] - row[inserted[p].first];
        outcome[s][p] = diff > cfg.tie_tolerance ? 1 : (diff < -cfg.tie_tolerance ? -1 : 0);
      }
    });
  });

  ContralateralResult out;
  std::size_t failed = 0;
  for (const auto& f : flags) failed += !f.empty();
  for (std::size_t p = 0; p < n; ++p) {
    PreferencePoint pt;
    pt.position = p;
    for (std::size_t s = 0; s < cfg.samples; ++s) {
      if (!flags[s].empty()) continue;
      if (outcome[s][p] > 0) ++pt.right;
      else if (outcome[s][p] < 0) ++pt.left;
      else ++pt.ties;
    }
    if (pt.right + pt.left > 0) pt.fraction_right = static_cast<double>(pt.right) / static_cast<double>(pt.right + pt.left);
    ReportRow row;
    row.key("position", p)
        .metric("right", static_cast<double>(pt.right))
        .metric("left", static_cast<double>(pt.left))
        .metric("ties", static_cast<double>(pt.ties));
    if (pt.fraction_right) row.metric("fraction_right", *pt.fraction_right);
    if (failed) row.flag = "partial: " + std::to_string(failed) + " samples failed";
    out.curve.push_back(pt);
    out.report.rows.push_back(std::move(row));
  }
  out.report.probe = "contralateral";
  out.report.scorer = scorer.name();
  out.report.config = cfg.to_json();
  out.report.seed = ctx.seed;
  out.report.scorer_queries = counter.queries();
  return out;
}

nlohmann::json ImperfectRepeatConfig::to_json() const {
  return {{"proportions", proportions},
          {"op_weights", {op_weights[0], op_weights[1], op_weights[2]}},
          {"min_pppl", min_pppl}};
}

ProbeReport run_imperfect_repeat(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                 const ImperfectRepeatConfig& cfg, const ProbeContext& ctx) {
  if (corpus.empty()) throw InvalidArgument("imperfect-repeat probe needs a nonempty corpus");
  if (cfg.proportions.empty()) throw InvalidArgument("imperfect-repeat probe needs at least one proportion");
  const std::size_t nq = cfg.proportions.size();
  CountingScorer counter(scorer);
  std::vector<ReportRow> rows(corpus.size() * nq);
  std::vector<char> filtered(corpus.size(), 0);
  parallel_for(corpus.size(), worker_count(scorer, ctx), [&](std::size_t k) {
    const Sequence& x = corpus[k];
    for (std::size_t q = 0; q < nq; ++q) rows[k * nq + q].key("id", x.id()).key("proportion", format_number(cfg.proportions[q]));
    std::string flag = flag_failures([&] {
      if (cfg.min_pppl > 0.0 && filter_pppl(counter, x) <= cfg.min_pppl) {
        filtered[k] = 1;
        return;
      }
      for (std::size_t q = 0; q < nq; ++q) {
        ReportRow& row = rows[k * nq + q];
        MutationSpec spec{cfg.proportions[q], cfg.op_weights, derive_seed(ctx.seed, {kTagImperfect, k, q})};
        std::string f = flag_failures([&] {
          const auto m = mutate_copy(x, spec);
          const Sequence& y = m.sequence;
          const Sequence pair = concat(x, y, x.id() + "_pair");
          const double paired = pseudo_perplexity(ofs_profile(counter, pair), pair, Span{x.size(), pair.size()});
          const double alone = pseudo_perplexity(ofs_profile(counter, y), y);
          row.metric("edits", static_cast<double>(m.trace.events.size()))
              .metric("copy_length", static_cast<double>(y.size()))
              .metric("pppl_paired", paired)
              .metric("pppl_isolated", alone);
        });
        if (!f.empty()) row.flag = f;
      }
    });
    if (!flag.empty())
      for (std::size_t q = 0; q < nq; ++q) rows[k * nq + q].flag = flag;
  });
  ProbeReport r{"imperfect_repeat", 1, scorer.name(), cfg.to_json(), {}, ctx.seed, counter.queries(), {}};
  std::size_t skipped = 0;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    skipped += filtered[k];
    if (filtered[k]) continue;
    for (std::size_t q = 0; q < nq; ++q) r.rows.push_back(std::move(rows[k * nq + q]));
  }
  r.notes["skipped_sequences"] = std::to_string(skipped);
  return r;
}

nlohmann::json NeedleConfig::to_json() const {
  return {{"needle_sizes", sizes_json(needle_sizes)}, {"haystack_sizes", sizes_json(haystack_sizes)}, {"samples", samples}};
}

ProbeReport run_needle_haystack(const Scorer& scorer, const AlphabetPtr& alphabet, const NeedleConfig& cfg,
                                const ProbeContext& ctx) {
  struct Cell {
    std::size_t needle, hay, sample;
  };
  std::vector<Cell> cells;
  for (std::size_t n : cfg.needle_sizes)
    for (std::size_t h : cfg.haystack_sizes)
      for (std::size_t s = 0; s < cfg.samples; ++s) cells.push_back({n, h, s});
  if (cells.empty()) throw InvalidArgument("needle probe grid is empty");
  const auto limit = scorer.capabilities().context_limit;
  CountingScorer counter(scorer);
  std::vector<ReportRow> rows(cells.size());
  parallel_for(cells.size(), worker_count(scorer, ctx), [&](std::size_t k) {
    const Cell& c = cells[k];
    ReportRow& row = rows[k];
    row.key("needle", c.needle).key("haystack", c.hay).key("sample", c.sample);
    if (limit && 2 * c.needle + c.hay > *limit) {
      row.flag = "exceeds context";
      return;
    }
    row.flag = flag_failures([&] {
      auto nh = make_needle_haystack(c.needle, c.hay, alphabet, derive_seed(ctx.seed, {kTagNeedle, c.needle, c.hay, c.sample}));
      const auto prof = ofs_profile(counter, nh.sequence);
      row.metric("length", static_cast<double>(nh.sequence.size()))
          .metric("pppl_needle1", pseudo_perplexity(prof, nh.sequence, nh.needle1))
          .metric("pppl_needle2", pseudo_perplexity(prof, nh.sequence, nh.needle2))
          .metric("pppl_haystack", c.hay ? pseudo_perplexity(prof, nh.sequence, Span{nh.needle1.end, nh.needle2.start})
                                         : std::nan(""));
    });
  });
  return ProbeReport{"needle_haystack", 1, scorer.name(), cfg.to_json(), std::move(rows), ctx.seed, counter.queries(), {}};
}

nlohmann::json SkipConfig::to_json() const { return {{"length", length}, {"samples", samples}}; }

ProbeReport run_skip(const Scorer& scorer, const AlphabetPtr& alphabet, const SkipConfig& cfg,
                     const ProbeContext& ctx) {
  if (cfg.length < 8 || cfg.length % 2 != 0) throw InvalidArgument("skip probe needs an even length >= 8");
  if (cfg.samples == 0) throw InvalidArgument("skip probe needs samples");
  const std::size_t n = cfg.length;
  CountingScorer counter(scorer);
  // [trace][sample] -> per-position (p_equivalent, p_true)
  std::vector<std::vector<std::vector<std::pair<double, double>>>> traces(
      2, std::vector<std::vector<std::pair<double, double>>>(cfg.samples));
  std::vector<std::string> flags(2 * cfg.samples);
  parallel_for(2 * cfg.samples, worker_count(scorer, ctx), [&](std::size_t t) {
    const std::size_t trace = t / cfg.samples;
    const std::size_t s = t % cfg.samples;
    flags[t] = flag_failures([&] {
      const Sequence x = random_member(n, n, alphabet, derive_seed(ctx.seed, {kTagSkip}), s);
      const Sequence other =
          trace == 0 ? make_skip_pair(x, s % 2 ? SkipPhase::odd : SkipPhase::even, derive_seed(ctx.seed, {kTagSkip, s}))
                     : random_member(n, n, alphabet, derive_seed(ctx.seed, {kTagSkip, 1}), s);
      const Sequence joined = concat(x, other, x.id() + (trace == 0 ? "_skip" : "_control"));
      const auto prof = ofs_profile(counter, joined);
      auto& out = traces[trace][s];
      for (std::size_t i = 0; i < joined.size(); ++i) {
        const std::size_t eq = i < n ? i + n : i - n;
        auto row = prof.at_position(i);
        out.emplace_back(row[joined[eq]], row[joined[i]]);
      }
    });
  });
  ProbeReport r{"skip", 1, scorer.name(), cfg.to_json(), {}, ctx.seed, counter.queries(), {}};
  std::size_t failed = 0;
  for (const auto& f : flags) failed += !f.empty();
  for (std::size_t trace = 0; trace < 2; ++trace) {
    for (std::size_t i = 0; i < 2 * n; ++i) {
      double eq = 0.0;
      double tr = 0.0;
      std::size_t used = 0;
      for (std::size_t s = 0; s < cfg.samples; ++s) {
        if (!flags[trace * cfg.samples + s].empty()) continue;
        eq += traces[trace][s][i].first;
        tr += traces[trace][s][i].second;
        ++used;
      }
      ReportRow row;
      row.key("trace", std::string(trace == 0 ? "skip" : "control")).key("position", i);
      row.metric("samples", static_cast<double>(used));
      if (used) row.metric("p_equivalent", eq / static_cast<double>(used)).metric("p_true", tr / static_cast<double>(used));
      if (failed) row.flag = "partial: " + std::to_string(failed) + " samples failed";
      r.rows.push_back(std::move(row));
    }
  }
  r.notes["equivalent_symbol"] = "symbol present at the aligned position of the other copy";
  return r;
}

std::string transform_name(ContextTransform t) {
  switch (t) {
    case ContextTransform::none: return "none";
    case ContextTransform::random: return "random";
    case ContextTransform::repeat: return "repeat";
    case ContextTransform::complement: return "complement";
    case ContextTransform::reversed: return "reversed";
    case ContextTransform::reverse_complement: return "reverse_complement";
  }
  return "none";
}

ContextTransform transform_from_name(const std::string& s) {
  for (auto t : {ContextTransform::none, ContextTransform::random, ContextTransform::repeat, ContextTransform::complement,
                 ContextTransform::reversed, ContextTransform::reverse_complement})
    if (transform_name(t) == s) return t;
  throw InvalidArgument("unknown context transform '" + s + "'");
}

nlohmann::json ContextTransformConfig::to_json() const {
  nlohmann::json names = nlohmann::json::array();
  for (auto t : transforms) names.push_back(transform_name(t));
  return {{"length", length}, {"samples", samples}, {"transforms", names}, {"mode", mode_name(mode)}};
}

ProbeReport run_context_transform(const Scorer& scorer, const AlphabetPtr& alphabet,
                                  const ContextTransformConfig& cfg, const ProbeContext& ctx) {
  const bool needs_complement = std::any_of(cfg.transforms.begin(), cfg.transforms.end(), [](ContextTransform t) {
    return t == ContextTransform::complement || t == ContextTransform::reverse_complement;
  });
  if (needs_complement && !alphabet->has_complement()) throw InvalidArgument("alphabet lacks complement");
  if (cfg.length == 0 || cfg.samples == 0 || cfg.transforms.empty())
    throw InvalidArgument("context-transform probe needs length, samples and transforms");
  const std::size_t nt = cfg.transforms.size();
  CountingScorer counter(scorer);
  std::vector<ReportRow> rows(cfg.samples * nt);
  parallel_for(rows.size(), worker_count(scorer, ctx), [&](std::size_t k) {
    const std::size_t s = k / nt;
    const ContextTransform t = cfg.transforms[k % nt];
    ReportRow& row = rows[k];
    row.key("transform", transform_name(t)).key("sample", s);
    row.flag = flag_failures([&] {
      const Sequence x = random_member(cfg.length, cfg.length, alphabet, derive_seed(ctx.seed, {kTagTransform}), s);
      std::optional<Sequence> context;
      switch (t) {
        case ContextTransform::none: break;
        case ContextTransform::random:
          context = random_member(cfg.length, cfg.length, alphabet, derive_seed(ctx.seed, {kTagTransform, 1}), s);
          break;
        case ContextTransform::repeat: context = x; break;
        case ContextTransform::complement: context = complement(x); break;
        case ContextTransform::reversed: context = reverse(x); break;
        case ContextTransform::reverse_complement: context = reverse_complement(x); break;
      }
      const Sequence joined = context ? concat(x, *context, x.id() + "_" + transform_name(t)) : x;
      const auto span = range_positions(0, x.size());
      const auto prof = profile(counter, joined, cfg.mode, ctx, span);
      row.metric("pppl", pseudo_perplexity_detail(prof, joined, std::span<const std::size_t>(span)).value);
    });
  });
  return ProbeReport{"context_transform", 1, scorer.name(), cfg.to_json(), std::move(rows), ctx.seed, counter.queries(), {}};
}

const std::vector<std::string>& probe_names() {
  static const std::vector<std::string> names{"doubling",  "multiplicity", "equivalent_mask",
                                              "flip_matrix", "contralateral", "imperfect_repeat",
                                              "needle_haystack", "skip", "context_transform"};
  return names;
}

}  // namespace ctxprobe
