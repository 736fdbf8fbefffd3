#include "ctxprobe/cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "ctxprobe/embedprobe/embedprobe.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/models/fixtures.hpp"
#include "ctxprobe/models/native_scorer.hpp"
#include "ctxprobe/models/oracle.hpp"
#include "ctxprobe/models/reference_scorers.hpp"
#include "ctxprobe/probes/probes.hpp"
#include "ctxprobe/probes/svg.hpp"
#include "ctxprobe/remote/remote_scorer.hpp"
#include "ctxprobe/scoring/metrics.hpp"
#include "ctxprobe/seqcore/fasta.hpp"
#include "ctxprobe/seqcore/generate.hpp"

namespace ctxprobe::cli {
namespace {

enum class Type { integer, real, boolean, text, integers, reals, texts };

struct Key {
  const char* name;
  Type type;
  nlohmann::json fallback;
};

// Every accepted configuration key, its type and default.
const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      {"config_version", Type::integer, kConfigVersion},
      {"scorer", Type::text, "oracle"},
      {"checkpoint", Type::text, ""},
      {"endpoint", Type::text, ""},
      {"model", Type::text, ""},
      {"cache_dir", Type::text, ""},
      {"max_in_flight", Type::integer, 4},
      {"alphabet", Type::text, "protein"},
      {"corpus", Type::texts, nlohmann::json::array()},
      {"random", Type::text, ""},
      {"min_length", Type::integer, nullptr},
      {"max_length", Type::integer, nullptr},
      {"pppl_min", Type::real, nullptr},
      {"seed", Type::integer, 0},
      {"out", Type::text, "ctxprobe_out"},
      {"workers", Type::integer, 0},
      {"batch_size", Type::integer, 64},
      {"emit_svg", Type::boolean, false},
      {"precision", Type::text, "double"},
      {"mode", Type::text, nullptr},
      {"oracle_flank", Type::integer, 10},
      {"oracle_min_match", Type::integer, 9},
      {"oracle_contiguous", Type::boolean, false},
      {"oracle_fallback", Type::text, "uniform"},
      {"multiplicity", Type::integer, nullptr},
      {"exclude_first", Type::boolean, nullptr},
      {"samples", Type::integer, nullptr},
      {"length", Type::integer, nullptr},
      {"unit_sizes", Type::integers, nullptr},
      {"multiplicities", Type::integers, nullptr},
      {"short_units", Type::boolean, false},
      {"positions_per_sequence", Type::integer, nullptr},
      {"min_pppl", Type::real, nullptr},
      {"tie_tolerance", Type::real, nullptr},
      {"proportions", Type::reals, nullptr},
      {"op_weights", Type::reals, nullptr},
      {"needle_sizes", Type::integers, nullptr},
      {"haystack_sizes", Type::integers, nullptr},
      {"transforms", Type::texts, nullptr},
      {"toy", Type::text, "attention"},
      {"steps", Type::integer, nullptr},
      {"learning_rate", Type::real, nullptr},
      {"mlp_hidden", Type::integers, nlohmann::json::array({256, 256})},
      {"mlp_learning_rate", Type::real, 1e-3},
      {"mlp_max_epochs", Type::integer, 100},
      {"mlp_patience", Type::integer, 8},
      {"splits", Type::integer, 5},
      {"scores", Type::text, ""},
  };
  return k;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : keys())
    if (name == k.name) return k;
  throw InvalidArgument("unknown configuration key '" + name + "'");
}

bool matches(Type t, const nlohmann::json& v) {
  if (v.is_null()) return true;
  auto all = [&](auto pred) { return v.is_array() && std::all_of(v.begin(), v.end(), pred); };
  switch (t) {
    case Type::integer: return v.is_number_integer();
    case Type::real: return v.is_number();
    case Type::boolean: return v.is_boolean();
    case Type::text: return v.is_string();
    case Type::integers: return all([](const nlohmann::json& e) { return e.is_number_integer(); });
    case Type::reals: return all([](const nlohmann::json& e) { return e.is_number(); });
    case Type::texts: return all([](const nlohmann::json& e) { return e.is_string(); });
  }
  return false;
}

nlohmann::json parse_scalar(Type t, const std::string& s) {
  try {
    std::size_t used = 0;
    switch (t) {
      case Type::integer:
      case Type::integers: {
        const long long v = std::stoll(s, &used);
        if (used != s.size()) break;
        return v;
      }
      case Type::real:
      case Type::reals: {
        const double v = std::stod(s, &used);
        if (used != s.size()) break;
        return v;
      }
      case Type::boolean:
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        break;
      case Type::text:
      case Type::texts: return s;
    }
  } catch (const std::logic_error&) {
  }
  throw InvalidArgument("cannot read '" + s + "'");
}

nlohmann::json parse_value(Type t, const std::string& s) {
  if (s == "null") return nullptr;
  if (t == Type::integers || t == Type::reals || t == Type::texts) {
    nlohmann::json arr = nlohmann::json::array();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) arr.push_back(parse_scalar(t, item));
    return arr;
  }
  return parse_scalar(t, s);
}

template <typename T>
std::optional<T> opt(const nlohmann::json& cfg, const char* key) {
  if (cfg.at(key).is_null()) return std::nullopt;
  return cfg.at(key).get<T>();
}

class Session {
 public:
  Session(nlohmann::json cfg, std::string command, std::ostream& out, std::ostream& err)
      : cfg_(std::move(cfg)), command_(std::move(command)), out_(out), err_(err) {
    if (cfg_["precision"] != "double") throw InvalidArgument("only double precision is supported");
    alphabet_ = make_alphabet(Alphabet::from_name(cfg_["alphabet"].get<std::string>()));
    seed_ = cfg_["seed"].get<std::uint64_t>();
    const auto w = cfg_["workers"].get<std::size_t>();
    workers_ = w ? w : std::max(1u, std::thread::hardware_concurrency());
    out_dir_ = cfg_["out"].get<std::string>();
    std::filesystem::create_directories(out_dir_);
  }

  int run_score();
  int run_probe(const std::string& name);
  int run_train();
  int run_embed();
  int run_filter();
  void report_capabilities(std::ostream& err) const;

 private:
  [[nodiscard]] ProbeContext context() const { return ProbeContext{seed_, workers_, cfg_["batch_size"].get<std::size_t>()}; }
  // Corpus scoring defaults to OFS, probes to one-at-a-time.
  [[nodiscard]] ProfileMode mode(ProfileMode fallback = ProfileMode::one_at_a_time) const {
    return cfg_["mode"].is_null() ? fallback : mode_from_name(cfg_["mode"].get<std::string>());
  }

  const Scorer& scorer();
  const std::vector<Sequence>& corpus();

  // Writes config echo and report; returns the exit code for the report.
  int finish(const ProbeReport& report, const std::string& stem, bool print_csv = false);
  void write_config_echo(const nlohmann::json& extra = nlohmann::json::object());

  nlohmann::json cfg_;
  std::string command_;
  std::ostream& out_;
  std::ostream& err_;
  AlphabetPtr alphabet_;
  std::uint64_t seed_ = 0;
  std::size_t workers_ = 1;
  std::filesystem::path out_dir_;
  std::unique_ptr<Scorer> scorer_;
  std::optional<std::vector<Sequence>> corpus_;
  bool echo_written_ = false;
};

const Scorer& Session::scorer() {
  if (scorer_) return *scorer_;
  const auto name = cfg_["scorer"].get<std::string>();
  if (name == "oracle") {
    OracleConfig oc;
    oc.flank = cfg_["oracle_flank"].get<std::size_t>();
    oc.min_match = cfg_["oracle_min_match"].get<std::size_t>();
    oc.contiguous = cfg_["oracle_contiguous"].get<bool>();
    const auto fb = cfg_["oracle_fallback"].get<std::string>();
    if (fb == "unigram") {
      oc.fallback = OracleFallback::unigram;
      oc.background = UnigramScorer::fit(corpus()).frequencies();
    } else if (fb != "uniform") {
      throw InvalidArgument("oracle_fallback must be uniform or unigram");
    }
    scorer_ = std::make_unique<RetrievalOracle>(alphabet_, oc);
  } else if (name == "uniform") {
    scorer_ = std::make_unique<UniformScorer>(alphabet_);
  } else if (name == "unigram") {
    scorer_ = std::make_unique<UnigramScorer>(UnigramScorer::fit(corpus()));
  } else if (name == "toy") {
    const auto path = cfg_["checkpoint"].get<std::string>();
    if (path.empty()) throw InvalidArgument("scorer 'toy' needs --checkpoint");
    std::shared_ptr<const MaskedLm> model = load_checkpoint(path);
    scorer_ = std::make_unique<NativeModelScorer>(model, alphabet_);
  } else if (name == "remote") {
    RemoteConfig rc;
    rc.endpoint = cfg_["endpoint"].get<std::string>();
    rc.model = cfg_["model"].get<std::string>();
    rc.alphabet = alphabet_;
    rc.cache_dir = cfg_["cache_dir"].get<std::string>();
    rc.max_in_flight = cfg_["max_in_flight"].get<std::size_t>();
    scorer_ = RemoteScorer::connect(rc);
  } else {
    throw InvalidArgument("unknown scorer '" + name + "' (oracle, uniform, unigram, toy, remote)");
  }
  return *scorer_;
}

const std::vector<Sequence>& Session::corpus() {
  if (corpus_) return *corpus_;
  std::vector<Sequence> seqs;
  FastaOptions fo{opt<std::size_t>(cfg_, "min_length"), opt<std::size_t>(cfg_, "max_length")};
  for (const auto& path : cfg_["corpus"]) {
    auto fc = parse_fasta(path.get<std::string>(), alphabet_, fo);
    for (const auto& r : fc.rejected) err_ << "rejected " << r.id << ": " << r.reason << '\n';
    seqs.insert(seqs.end(), fc.sequences.begin(), fc.sequences.end());
  }
  const auto spec = cfg_["random"].get<std::string>();
  if (!spec.empty()) {
    // NxL or NxMIN-MAX
    const auto x = spec.find('x');
    if (x == std::string::npos) throw InvalidArgument("--random expects NxL or NxMIN-MAX");
    const auto count = std::stoul(spec.substr(0, x));
    const auto lens = spec.substr(x + 1);
    const auto dash = lens.find('-');
    const auto lo = std::stoul(lens.substr(0, dash));
    const auto hi = dash == std::string::npos ? lo : std::stoul(lens.substr(dash + 1));
    auto r = random_corpus(count, lo, hi, alphabet_, seed_);
    seqs.insert(seqs.end(), r.begin(), r.end());
  }
  if (seqs.empty()) throw InvalidArgument("no sequences: give --corpus FILE or --random NxL");
  if (const auto threshold = opt<double>(cfg_, "pppl_min"); threshold && command_ != "filter") {
    corpus_ = std::move(seqs);
    const Scorer& s = scorer();
    std::vector<Sequence> kept;
    for (const auto& x : *corpus_)
      if (pseudo_perplexity(ofs_profile(s, x), x) > *threshold) kept.push_back(x);
    err_ << "pppl filter kept " << kept.size() << " of " << corpus_->size() << " sequences\n";
    seqs = std::move(kept);
    if (seqs.empty()) throw InvalidArgument("pppl filter removed every sequence");
  }
  corpus_ = std::move(seqs);
  return *corpus_;
}

void Session::write_config_echo(const nlohmann::json& extra) {
  nlohmann::json echo{{"command", command_}, {"config", cfg_}, {"seeds", {{"master", seed_}}}};
  for (auto it = extra.begin(); it != extra.end(); ++it) echo[it.key()] = it.value();
  std::ofstream f(out_dir_ / "config.json", std::ios::binary);
  f << echo.dump(2) << '\n';
  echo_written_ = true;
}

int Session::finish(const ProbeReport& report, const std::string& stem, bool print_csv) {
  if (!echo_written_) write_config_echo();
  write_report(report, out_dir_ / stem, RunInfo{workers_});
  if (cfg_["emit_svg"].get<bool>()) write_quicklook(report, out_dir_ / stem);
  if (print_csv) out_ << report.to_csv();
  err_ << stem << ": " << report.rows.size() << " rows, " << report.flagged_rows() << " flagged, "
       << report.scorer_queries << " scorer queries -> " << (out_dir_ / stem).string() << ".csv\n";
  return report.partial() ? kPartial : kOk;
}

int Session::run_score() {
  const Scorer& s = scorer();
  const auto& seqs = corpus();
  const ProfileMode m = mode(ProfileMode::ofs);
  CountingScorer counter(s);
  std::vector<ReportRow> rows(seqs.size());
  const std::size_t workers = s.capabilities().concurrent ? workers_ : 1;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < seqs.size(); k = next++) {
      const Sequence& x = seqs[k];
      ReportRow& row = rows[k];
      row.key("id", x.id()).metric("length", static_cast<double>(x.size()));
      try {
        ProfileOptions po;
        po.batch_size = cfg_["batch_size"].get<std::size_t>();
        const auto prof = m == ProfileMode::ofs ? ofs_profile(counter, x) : one_at_a_time_profile(counter, x, po);
        const auto sum = summarize(prof, x);
        row.metric("pppl", sum.pppl)
            .metric("mean_entropy", sum.mean_entropy)
            .metric("floored", static_cast<double>(sum.floored_rows));
        if (m == ProfileMode::one_at_a_time) {
          // One extra pass logs how far OFS strays from the masked profile.
          const auto fast = ofs_profile(counter, x);
          const auto div = profile_divergence(prof, fast);
          row.metric("pppl_ofs", pseudo_perplexity(fast, x)).metric("ofs_mean_kl", div.mean_kl);
        }
      } catch (const ContextError&) {
        row.flag = "exceeds context";
      } catch (const ScorerError& e) {
        row.flag = std::string("scorer error: ") + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  std::exception_ptr failure;
  try {
    work();
  } catch (...) {
    failure = std::current_exception();
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  ProbeReport r{"score", 1, s.name(), {{"mode", mode_name(m)}}, std::move(rows), seed_, counter.queries(), {}};
  return finish(r, "score", true);
}

template <typename T>
void set_if(const nlohmann::json& cfg, const char* key, T& target) {
  if (!cfg.at(key).is_null()) target = cfg.at(key).get<T>();
}

int Session::run_probe(const std::string& name) {
  const auto& names = probe_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw InvalidArgument("unknown probe '" + name + "'");
  const Scorer& s = scorer();
  const ProbeContext ctx = context();
  if (name == "doubling") {
    DoublingConfig c;
    c.mode = mode();
    set_if(cfg_, "multiplicity", c.multiplicity);
    set_if(cfg_, "exclude_first", c.exclude_first);
    return finish(run_doubling(s, corpus(), c, ctx), name);
  }
  if (name == "multiplicity") {
    MultiplicitySweepConfig c = cfg_["short_units"].get<bool>() ? MultiplicitySweepConfig::short_units() : MultiplicitySweepConfig{};
    c.mode = mode();
    set_if(cfg_, "unit_sizes", c.unit_sizes);
    set_if(cfg_, "multiplicities", c.multiplicities);
    set_if(cfg_, "samples", c.samples);
    return finish(run_multiplicity_sweep(s, alphabet_, c, ctx), name);
  }
  if (name == "equivalent_mask") {
    EquivalentMaskConfig c;
    set_if(cfg_, "positions_per_sequence", c.positions_per_sequence);
    set_if(cfg_, "exclude_first", c.exclude_first);
    set_if(cfg_, "min_pppl", c.min_pppl);
    return finish(run_equivalent_mask(s, corpus(), c, ctx).report, name);
  }
  if (name == "flip_matrix") {
    FlipMatrixConfig c;
    set_if(cfg_, "positions_per_sequence", c.positions_per_sequence);
    set_if(cfg_, "exclude_first", c.exclude_first);
    return finish(run_flip_matrix(s, corpus(), c, ctx).report, name);
  }
  if (name == "contralateral") {
    ContralateralConfig c;
    set_if(cfg_, "length", c.length);
    set_if(cfg_, "samples", c.samples);
    set_if(cfg_, "tie_tolerance", c.tie_tolerance);
    return finish(run_contralateral(s, alphabet_, c, ctx).report, name);
  }
  if (name == "imperfect_repeat") {
    ImperfectRepeatConfig c;
    set_if(cfg_, "proportions", c.proportions);
    set_if(cfg_, "min_pppl", c.min_pppl);
    if (!cfg_["op_weights"].is_null()) {
      const auto w = cfg_["op_weights"].get<std::vector<double>>();
      if (w.size() != 3) throw InvalidArgument("op_weights needs three values (substitution, insertion, deletion)");
      std::copy(w.begin(), w.end(), c.op_weights.begin());
    }
    return finish(run_imperfect_repeat(s, corpus(), c, ctx), name);
  }
  if (name == "needle_haystack") {
    NeedleConfig c;
    set_if(cfg_, "needle_sizes", c.needle_sizes);
    set_if(cfg_, "haystack_sizes", c.haystack_sizes);
    set_if(cfg_, "samples", c.samples);
    return finish(run_needle_haystack(s, alphabet_, c, ctx), name);
  }
  if (name == "skip") {
    SkipConfig c;
    set_if(cfg_, "length", c.length);
    set_if(cfg_, "samples", c.samples);
    return finish(run_skip(s, alphabet_, c, ctx), name);
  }
  ContextTransformConfig c;
  c.mode = mode();
  set_if(cfg_, "length", c.length);
  set_if(cfg_, "samples", c.samples);
  if (!cfg_["transforms"].is_null()) {
    c.transforms.clear();
    for (const auto& t : cfg_["transforms"]) c.transforms.push_back(transform_from_name(t.get<std::string>()));
  }
  return finish(run_context_transform(s, alphabet_, c, ctx), name);
}

int Session::run_train() {
  FixtureRecipe recipe = standard_fixture(fixture_from_name(cfg_["toy"].get<std::string>()));
  if (!(*alphabet_ == *recipe.corpus.alphabet)) throw InvalidArgument("toy models are trained on the protein alphabet");
  set_if(cfg_, "steps", recipe.train.steps);
  set_if(cfg_, "learning_rate", recipe.train.learning_rate);
  if (seed_ != 0) {
    recipe.train.seed = derive_seed(seed_, {1});
    recipe.corpus.seed = derive_seed(seed_, {2});
    recipe.attention.seed = recipe.conv.seed = derive_seed(seed_, {3});
  }
  write_config_echo({{"fixture", recipe.to_json()}});
  const auto start = std::chrono::steady_clock::now();
  const std::size_t every = std::max<std::size_t>(1, recipe.train.steps / 20);
  auto trained = train_fixture(recipe, [&](std::size_t step, double loss) {
    if ((step + 1) % every == 0) err_ << "step " << step + 1 << " loss " << loss << '\n';
  });
  const auto stem = out_dir_ / ("toy-" + fixture_name(recipe.kind));
  save_checkpoint(*trained.model, stem.string() + ".ckpt");
  write_loss_trace(stem.string() + ".loss.csv", trained.result.loss_trace);
  if (cfg_["emit_svg"].get<bool>()) {
    std::ofstream f(stem.string() + ".loss.svg");
    f << line_traces_svg("training loss", {{"loss (smoothed)", smooth_trace(trained.result.loss_trace, 50)}});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out_ << stem.string() << ".ckpt\n";
  err_ << "trained " << trained.result.loss_trace.size() << " steps in " << secs << " s\n";
  if (trained.result.diverged) {
    err_ << "training diverged; restored the snapshot from step " << trained.result.restored_step << '\n';
    return kPartial;
  }
  return kOk;
}

int Session::run_embed() {
  const Scorer& s = scorer();
  const auto& seqs = corpus();
  auto groups = build_groups(seqs, seed_);
  auto sets = extract_training_sets(s, seqs, groups, ExtractOptions{cfg_["batch_size"].get<std::size_t>(), workers_});
  MlpSpec spec;
  spec.hidden = cfg_["mlp_hidden"].get<std::vector<std::size_t>>();
  spec.learning_rate = cfg_["mlp_learning_rate"].get<double>();
  spec.max_epochs = cfg_["mlp_max_epochs"].get<std::size_t>();
  spec.patience = cfg_["mlp_patience"].get<std::size_t>();
  EvaluationConfig ec;
  ec.splits = cfg_["splits"].get<std::size_t>();
  ec.seed = seed_;
  ec.workers = workers_;
  auto result = train_and_evaluate(sets, spec, ec);
  result.curves.scorer = result.summary.scorer = s.name();
  const int a = finish(result.curves, "embed_regression");
  const int b = finish(result.summary, "embed_regression_summary", true);
  return std::max(a, b);
}

int Session::run_filter() {
  const auto threshold = opt<double>(cfg_, "pppl_min");
  if (!threshold) throw InvalidArgument("filter needs --pppl-min");
  const auto scores = cfg_["scores"].get<std::string>();
  write_config_echo();
  if (!scores.empty()) {
    std::ifstream in(scores);
    if (!in) throw InvalidArgument("cannot read " + scores);
    const auto rows = read_csv(in);
    if (rows.empty()) throw InvalidArgument(scores + " is empty");
    const auto& header = rows.front();
    const auto col = std::find(header.begin(), header.end(), "pppl") - header.begin();
    if (col == static_cast<long>(header.size())) throw InvalidArgument(scores + " has no pppl column");
    std::ostringstream kept;
    std::size_t n = 0;
    auto write_row = [&](const std::vector<std::string>& r) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        const bool quote = r[c].find_first_of(",\"\n") != std::string::npos;
        std::string v = r[c];
        if (quote) {
          std::string q = "\"";
          for (char ch : v) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
          v = q + "\"";
        }
        kept << (c ? "," : "") << v;
      }
      kept << '\n';
    };
    write_row(header);
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const auto& cell = rows[k].at(static_cast<std::size_t>(col));
      if (cell.empty()) continue;
      double v = 0.0;
      try {
        v = std::stod(cell);
      } catch (const std::logic_error&) {
        continue;
      }
      if (v > *threshold) {
        write_row(rows[k]);
        ++n;
      }
    }
    out_ << kept.str();
    std::ofstream(out_dir_ / "filtered.csv", std::ios::binary) << kept.str();
    err_ << "kept " << n << " of " << rows.size() - 1 << " rows with pppl > " << *threshold << '\n';
    return kOk;
  }
  const Scorer& s = scorer();
  const auto& seqs = corpus();
  std::vector<Sequence> kept;
  std::ostringstream csv;
  csv << "id,pppl\n";
  for (const auto& x : seqs) {
    const double v = pseudo_perplexity(ofs_profile(s, x), x);
    if (v > *threshold) {
      kept.push_back(x);
      csv << x.id() << ',' << format_number(v) << '\n';
    }
  }
  write_fasta(out_dir_ / "filtered.fasta", kept);
  out_ << csv.str();
  err_ << "kept " << kept.size() << " of " << seqs.size() << " sequences with OFS pppl > " << *threshold << '\n';
  return kOk;
}

void Session::report_capabilities(std::ostream& err) const {
  if (!scorer_) return;
  const Capabilities c = scorer_->capabilities();
  nlohmann::json j{{"scorer", scorer_->name()},
                   {"distributions", c.distributions},
                   {"embeddings", c.embeddings},
                   {"causal", c.causal},
                   {"embedding_width", c.embedding_width},
                   {"context_limit", c.context_limit ? nlohmann::json(*c.context_limit) : nlohmann::json(nullptr)}};
  err << "capabilities: " << j.dump() << '\n';
}

}  // namespace

nlohmann::json default_config() {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : keys()) j[k.name] = k.fallback;
  return j;
}

nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw InvalidArgument("configuration must be an object of flat keys");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const Key& k = find_key(it.key());
    if (!matches(k.type, it.value())) throw InvalidArgument("configuration key '" + it.key() + "' has the wrong type");
    if (it.key() == "config_version" && it.value() != kConfigVersion)
      throw InvalidArgument("unsupported config_version " + it.value().dump());
    base[it.key()] = it.value();
  }
  return base;
}

std::pair<std::string, nlohmann::json> parse_setting(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  return {key, parse_value(find_key(key).type, assignment.substr(eq + 1))};
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get(c);
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ctxprobe: in-context retrieval probes for masked sequence models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_file;
  std::vector<std::string> settings;
  std::map<std::string, std::string> flags;
  std::vector<std::string> corpus_files;
  bool ofs = false;
  bool svg = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON run configuration (flat keys)");
    sub->add_option("--set", settings, "Override any configuration key: key=value (lists comma-separated)");
    for (const char* k : {"scorer", "checkpoint", "endpoint", "model", "cache-dir", "alphabet", "random", "min-length",
                          "max-length", "pppl-min", "seed", "out", "workers", "batch-size", "precision", "mode",
                          "samples", "multiplicity", "length"}) {
      sub->add_option(std::string("--") + k, flags[k]);
    }
    sub->add_option("--corpus", corpus_files, "FASTA file(s), plain or gzip");
    sub->add_flag("--ofs", ofs, "Score from one unmasked pass instead of one-at-a-time masking");
    sub->add_flag("--emit-svg", svg, "Write quicklook plots beside reports");
  };

  auto* score = app.add_subcommand("score", "Pseudo-perplexity table for a corpus");
  add_common(score);
  auto* probe = app.add_subcommand("probe", "Run one probe");
  std::string probe_name;
  probe->add_option("name", probe_name, "Probe name")->required();
  add_common(probe);
  auto* train = app.add_subcommand("train-toy", "Train a toy model on its standard synthetic corpus");
  add_common(train);
  train->add_option("--toy", flags["toy"], "attention or conv");
  train->add_option("--steps", flags["steps"]);
  auto* embed = app.add_subcommand("embed-regress", "Embedding-quality regression over multiplicity/control groups");
  add_common(embed);
  auto* filter = app.add_subcommand("filter", "Keep rows or sequences with pseudo-perplexity above a threshold");
  add_common(filter);
  filter->add_option("--scores", flags["scores"], "CSV from `score` with a pppl column");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  nlohmann::json cfg;
  try {
    cfg = default_config();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw InvalidArgument("cannot read config " + config_file);
      cfg = merge_config(cfg, nlohmann::json::parse(in));
    }
    nlohmann::json over = nlohmann::json::object();
    for (const auto& [flag, value] : flags) {
      auto* o = sub->get_option_no_throw("--" + flag);
      if (!o || o->count() == 0) continue;
      std::string key = flag;
      std::replace(key.begin(), key.end(), '-', '_');
      over[key] = parse_value(find_key(key).type, value);
    }
    if (!corpus_files.empty()) over["corpus"] = corpus_files;
    if (ofs) over["mode"] = "ofs";
    if (svg) over["emit_svg"] = true;
    for (const auto& s : settings) {
      auto [k, v] = parse_setting(s);
      over[k] = v;
    }
    cfg = merge_config(cfg, over);
    if (!cfg["mode"].is_null()) mode_from_name(cfg["mode"].get<std::string>());
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  std::unique_ptr<Session> session;
  try {
    session = std::make_unique<Session>(cfg, command, out, err);
    if (command == "score") return session->run_score();
    if (command == "probe") return session->run_probe(probe_name);
    if (command == "train-toy") return session->run_train();
    if (command == "embed-regress") return session->run_embed();
    return session->run_filter();
  } catch (const CapabilityError& e) {
    err << "capability error: " << e.what() << '\n';
    if (session) session->report_capabilities(err);
    return kCapability;
  } catch (const ContextError& e) {
    err << "scorer error: " << e.what() << '\n';
    return kScorerFailure;
  } catch (const ScorerError& e) {
    err << "scorer error: " << e.what() << '\n';
    return kScorerFailure;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << '\n';
    return kScorerFailure;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << '\n';
    return kScorerFailure;
  } catch (const InvalidArgument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kScorerFailure;
  }
}

}  // namespace ctxprobe::cli
