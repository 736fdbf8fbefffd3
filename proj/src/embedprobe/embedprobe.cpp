#include "ctxprobe/embedprobe/embedprobe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxprobe/error.hpp"
#include "ctxprobe/models/train.hpp"
#include "ctxprobe/probes/parallel.hpp"
#include "ctxprobe/scoring/metrics.hpp"
#include "ctxprobe/seqcore/generate.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {
namespace {

enum : std::uint64_t { kTagTail = 0xC7, kTagSplit = 0x5B, kTagInit = 0x1A, kTagShuffle = 0x5F };

// Row-wise log-softmax.
Matrix log_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

double mean_entropy(const Matrix& targets) {
  if (targets.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < targets.rows(); ++r)
    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
      const double t = targets(r, c);
      if (t > 0.0) total -= t * std::log(t);
    }
  return total / static_cast<double>(targets.rows());
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Example rows split by sequence index.
Split split_examples(const RegressionSet& set, const std::vector<char>& held_out) {
  Split s;
  for (std::size_t e = 0; e < set.sequence_index.size(); ++e)
    (held_out[set.sequence_index[e]] ? s.validation : s.train).push_back(e);
  return s;
}

struct EpochLoss {
  double train;
  double validation;
};

struct JobResult {
  std::vector<EpochLoss> curve;
  double best_validation = HUGE_VAL;
  double target_entropy = 0.0;
  bool failed = false;
  bool retried = false;
};

// One training attempt; returns false when a loss went non-finite.
bool fit(const Matrix& xtr, const Matrix& ttr, const Matrix& xva, const Matrix& tva, const MlpSpec& spec, double lr,
         std::uint64_t seed, JobResult& out) {
  Mlp mlp(static_cast<std::size_t>(xtr.cols()), static_cast<std::size_t>(ttr.cols()), spec.hidden,
          derive_seed(seed, {kTagInit}));
  Adam adam(mlp.params().size(), spec.beta1, spec.beta2, spec.epsilon);
  std::vector<double> grad(mlp.params().size());
  Rng rng(derive_seed(seed, {kTagShuffle}));
  std::vector<std::size_t> order(static_cast<std::size_t>(xtr.rows()));
  std::iota(order.begin(), order.end(), 0);
  out.curve.clear();
  out.best_validation = HUGE_VAL;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += spec.batch_size) {
      const std::size_t e = std::min(order.size(), b + spec.batch_size);
      std::span<const std::size_t> idx(order.data() + b, e - b);
      const Matrix xb = gather_rows(xtr, idx);
      const Matrix tb = gather_rows(ttr, idx);
      const double l = mlp.loss_and_gradient(xb, tb, grad);
      if (!std::isfinite(l)) return false;
      sum += l * static_cast<double>(idx.size());
      seen += idx.size();
      adam.step(mlp.params().values(), grad, lr);
    }
    const double val = mlp.loss(xva, tva);
    if (!std::isfinite(val)) return false;
    out.curve.push_back({sum / static_cast<double>(seen), val});
    if (val < out.best_validation - spec.min_improvement) {
      out.best_validation = val;
      stale = 0;
    } else {
      out.best_validation = std::min(out.best_validation, val);
      if (++stale >= spec.patience) break;
    }
  }
  return true;
}

}  // namespace

std::string GroupSpec::name() const {
  switch (kind) {
    case GroupKind::baseline: return "1x";
    case GroupKind::multiplicity: return "multiplicity-" + std::to_string(n) + "x";
    case GroupKind::control: return "control-" + std::to_string(n) + "x";
    case GroupKind::one_hot: return "one-hot";
  }
  return "?";
}

std::vector<GroupSpec> standard_groups(std::size_t max_multiplicity) {
  std::vector<GroupSpec> g{{GroupKind::baseline, 1}};
  for (std::size_t n = 2; n <= max_multiplicity; ++n) g.push_back({GroupKind::multiplicity, n});
  for (std::size_t n = 2; n <= max_multiplicity; ++n) g.push_back({GroupKind::control, n});
  g.push_back({GroupKind::one_hot, 1});
  return g;
}

std::vector<GroupSequences> build_groups(const std::vector<Sequence>& corpus, std::uint64_t seed,
                                         std::size_t max_multiplicity, std::size_t max_length) {
  if (corpus.empty()) throw InvalidArgument("embedding regression needs a nonempty corpus");
  for (const auto& x : corpus)
    if (x.size() >= max_length || x.size() == 0)
      throw InvalidArgument("sequence '" + x.id() + "' must be nonempty and shorter than " + std::to_string(max_length));
  std::vector<GroupSequences> out;
  for (const GroupSpec& g : standard_groups(max_multiplicity)) {
    GroupSequences gs{g, {}};
    for (std::size_t k = 0; k < corpus.size(); ++k) {
      const Sequence& x = corpus[k];
      switch (g.kind) {
        case GroupKind::baseline:
        case GroupKind::one_hot: gs.sequences.push_back(x); break;
        case GroupKind::multiplicity: gs.sequences.push_back(multiply(x, g.n)); break;
        case GroupKind::control: {
          const Sequence tail = random_sequence((g.n - 1) * x.size(), x.alphabet_ptr(), derive_seed(seed, {kTagTail, k, g.n}));
          gs.sequences.push_back(concat(x, tail, x.id() + "_control" + std::to_string(g.n)));
          break;
        }
      }
    }
    out.push_back(std::move(gs));
  }
  return out;
}

std::vector<RegressionSet> extract_training_sets(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                                 const std::vector<GroupSequences>& groups, const ExtractOptions& opt) {
  const bool needs_embeddings =
      std::any_of(groups.begin(), groups.end(), [](const GroupSequences& g) { return g.spec.kind != GroupKind::one_hot; });
  const Capabilities caps = scorer.capabilities();
  if (needs_embeddings && !caps.embeddings) throw CapabilityError("scorer '" + scorer.name() + "' does not provide embeddings");
  for (const auto& g : groups)
    if (g.sequences.size() != corpus.size()) throw InvalidArgument("group " + g.spec.name() + " is not aligned with the corpus");
  const std::size_t workers = caps.concurrent ? std::max<std::size_t>(1, opt.workers) : 1;
  const std::size_t a = corpus.front().alphabet().size();

  std::vector<DistributionMatrix> profiles(corpus.size());
  parallel_for(corpus.size(), workers, [&](std::size_t k) {
    ProfileOptions po;
    po.batch_size = opt.batch_size;
    profiles[k] = one_at_a_time_profile(scorer, corpus[k], po);
  });

  std::size_t examples = 0;
  for (const auto& x : corpus) examples += x.size();
  Matrix targets(static_cast<Eigen::Index>(examples), static_cast<Eigen::Index>(a));
  std::vector<std::size_t> seq_index;
  std::vector<std::size_t> positions;
  for (std::size_t k = 0; k < corpus.size(); ++k)
    for (std::size_t i = 0; i < corpus[k].size(); ++i) {
      const auto row = profiles[k].at_position(i);
      for (std::size_t c = 0; c < a; ++c) targets(static_cast<Eigen::Index>(seq_index.size()), static_cast<Eigen::Index>(c)) = row[c];
      seq_index.push_back(k);
      positions.push_back(i);
    }

  std::vector<std::size_t> offset(corpus.size(), 0);
  for (std::size_t k = 1; k < corpus.size(); ++k) offset[k] = offset[k - 1] + corpus[k - 1].size();

  std::vector<RegressionSet> out;
  for (const auto& g : groups) {
    RegressionSet set{g.spec, {}, targets, seq_index, positions};
    if (g.spec.kind == GroupKind::one_hot) {
      set.inputs = Matrix::Zero(static_cast<Eigen::Index>(examples), static_cast<Eigen::Index>(a));
      for (std::size_t e = 0; e < examples; ++e)
        set.inputs(static_cast<Eigen::Index>(e), corpus[seq_index[e]][positions[e]]) = 1.0;
    } else {
      set.inputs.resize(static_cast<Eigen::Index>(examples), static_cast<Eigen::Index>(caps.embedding_width));
      parallel_for(corpus.size(), workers, [&](std::size_t k) {
        Wants w;
        w.distributions = false;
        w.embeddings = true;
        auto resp = scorer.score(ScorerQuery{g.sequences[k], {}, w});
        if (!resp.embeddings || resp.embeddings->width != caps.embedding_width ||
            resp.embeddings->rows() < corpus[k].size())
          throw ProtocolError("embedding response has the wrong shape for '" + g.sequences[k].id() + "'");
        for (std::size_t i = 0; i < corpus[k].size(); ++i) {
          const auto row = resp.embeddings->row(i);
          for (std::size_t c = 0; c < row.size(); ++c)
            set.inputs(static_cast<Eigen::Index>(offset[k] + i), static_cast<Eigen::Index>(c)) = row[c];
        }
      });
    }
    out.push_back(std::move(set));
  }
  return out;
}

void MlpSpec::validate() const {
  if (hidden.empty() || std::find(hidden.begin(), hidden.end(), 0u) != hidden.end())
    throw InvalidArgument("MLP needs nonzero hidden widths");
  if (!(learning_rate > 0.0) || batch_size == 0 || max_epochs == 0 || patience == 0)
    throw InvalidArgument("MLP learning rate, batch size, epochs and patience must be positive");
}

nlohmann::json MlpSpec::to_json() const {
  return {{"hidden", hidden},         {"learning_rate", learning_rate}, {"batch_size", batch_size},
          {"max_epochs", max_epochs}, {"patience", patience},           {"min_improvement", min_improvement},
          {"standardize", standardize}, {"activation", "gelu"},         {"optimizer", "adam"}};
}

Mlp::Mlp(std::size_t input_width, std::size_t output_width, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  std::size_t in = input_width;
  std::vector<std::size_t> widths(hidden);
  widths.push_back(output_width);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const auto w = params_.add("w" + std::to_string(l), in, widths[l]);
    const auto b = params_.add("b" + std::to_string(l), 1, widths[l]);
    params_.init_uniform(w, 1.0, in, derive_seed(seed, {l}));
    params_.fill(b, 0.0);
    weights_.push_back(w);
    biases_.push_back(b);
    in = widths[l];
  }
}

Matrix Mlp::run(const Matrix& inputs, std::vector<Matrix>* pre, std::vector<Matrix>* post) const {
  Matrix h = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = h * params_.mat(weights_[l]);
    z.rowwise() += params_.mat(biases_[l]).row(0);
    if (post) post->push_back(h);
    if (l + 1 == weights_.size()) return z;
    if (pre) pre->push_back(z);
    h = z.unaryExpr([](double v) { return gelu(v); });
  }
  return h;
}

Matrix Mlp::predict(const Matrix& inputs) const {
  Matrix z = run(inputs, nullptr, nullptr);
  softmax_rows_inplace(z);
  return z;
}

double Mlp::loss(const Matrix& inputs, const Matrix& targets) const {
  if (inputs.rows() == 0) return 0.0;
  const Matrix lp = log_softmax(run(inputs, nullptr, nullptr));
  return -(targets.array() * lp.array()).sum() / static_cast<double>(inputs.rows());
}

double Mlp::loss_and_gradient(const Matrix& inputs, const Matrix& targets, std::span<double> gradient) const {
  if (gradient.size() != params_.size()) throw InvalidArgument("gradient size mismatch");
  std::fill(gradient.begin(), gradient.end(), 0.0);
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  const Matrix lp = log_softmax(run(inputs, &pre, &post));
  const double n = static_cast<double>(inputs.rows());
  const double loss = -(targets.array() * lp.array()).sum() / n;
  // Soft targets sum to one per row, so d/dz = softmax(z) - t.
  Matrix dz = (lp.array().exp() - targets.array()) / n;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    ParamSet::view(gradient.data(), params_.block(weights_[l])) = post[l].transpose() * dz;
    ParamSet::view(gradient.data(), params_.block(biases_[l])) = dz.colwise().sum();
    if (l == 0) break;
    Matrix dh = dz * params_.mat(weights_[l]).transpose();
    dz = dh.array() * pre[l - 1].unaryExpr([](double v) { return gelu_derivative(v); }).array();
  }
  return loss;
}

RegressionResult train_and_evaluate(const std::vector<RegressionSet>& sets, const MlpSpec& spec,
                                    const EvaluationConfig& cfg) {
  spec.validate();
  if (sets.empty()) throw InvalidArgument("no regression sets");
  if (cfg.splits == 0 || !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
    throw InvalidArgument("need at least one split and a validation fraction in (0, 1)");
  std::size_t sequences = 0;
  for (std::size_t k : sets.front().sequence_index) sequences = std::max(sequences, k + 1);
  for (const auto& s : sets)
    if (s.sequence_index != sets.front().sequence_index || s.positions != sets.front().positions)
      throw InvalidArgument("regression sets are not position-aligned");
  const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.validation_fraction * static_cast<double>(sequences))));
  if (held >= sequences) throw InvalidArgument("too few sequences to split");

  std::vector<std::vector<char>> held_out(cfg.splits, std::vector<char>(sequences, 0));
  for (std::size_t s = 0; s < cfg.splits; ++s) {
    std::vector<std::size_t> ids(sequences);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(cfg.seed, {kTagSplit, s}));
    std::shuffle(ids.begin(), ids.end(), rng.engine());
    for (std::size_t k = 0; k < held; ++k) held_out[s][ids[k]] = 1;
  }

  std::vector<JobResult> jobs(sets.size() * cfg.splits);
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
    const RegressionSet& set = sets[j / cfg.splits];
    const std::size_t s = j % cfg.splits;
    const Split split = split_examples(set, held_out[s]);
    Matrix xtr = gather_rows(set.inputs, split.train);
    Matrix xva = gather_rows(set.inputs, split.validation);
    const Matrix ttr = gather_rows(set.targets, split.train);
    const Matrix tva = gather_rows(set.targets, split.validation);
    if (spec.standardize) {
      const Vector mean = xtr.colwise().mean();
      Vector sd = ((xtr.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(xtr.rows())).sqrt();
      sd = sd.unaryExpr([](double v) { return v > 1e-8 ? v : 1.0; });
      xtr = (xtr.rowwise() - mean).array().rowwise() / sd.array();
      xva = (xva.rowwise() - mean).array().rowwise() / sd.array();
    }
    JobResult& r = jobs[j];
    r.target_entropy = mean_entropy(tva);
    const std::uint64_t seed = derive_seed(cfg.seed, {j / cfg.splits, s});
    if (!fit(xtr, ttr, xva, tva, spec, spec.learning_rate, seed, r)) {
      r.retried = true;
      r.failed = !fit(xtr, ttr, xva, tva, spec, spec.learning_rate / 2, seed, r);
    }
  });

  RegressionResult out;
  out.curves.probe = "embed_regression";
  out.curves.scorer = "";
  out.curves.config = {{"mlp", spec.to_json()},
                       {"splits", cfg.splits},
                       {"validation_fraction", cfg.validation_fraction},
                       {"split_unit", "sequence id"}};
  out.curves.seed = cfg.seed;
  out.summary = out.curves;
  out.summary.probe = "embed_regression_summary";
  for (std::size_t g = 0; g < sets.size(); ++g) {
    GroupSummary sum{sets[g].spec, 0.0, 0.0, 0, 0};
    std::size_t ok = 0;
    for (std::size_t s = 0; s < cfg.splits; ++s) {
      const JobResult& r = jobs[g * cfg.splits + s];
      sum.retried_splits += r.retried;
      for (std::size_t e = 0; e < r.curve.size(); ++e) {
        ReportRow row;
        row.key("group", sets[g].spec.name()).key("split", s).key("step", e + 1);
        row.metric("train_loss", r.curve[e].train).metric("val_loss", r.curve[e].validation);
        out.curves.rows.push_back(std::move(row));
      }
      if (r.failed) {
        ++sum.failed_splits;
        ReportRow row;
        row.key("group", sets[g].spec.name()).key("split", s).key("step", std::string("-"));
        row.flag = "non-finite loss after retry";
        out.curves.rows.push_back(std::move(row));
        continue;
      }
      sum.mean_validation_loss += r.best_validation;
      sum.mean_target_entropy += r.target_entropy;
      ++ok;
    }
    ReportRow row;
    row.key("group", sets[g].spec.name());
    if (ok) {
      sum.mean_validation_loss /= static_cast<double>(ok);
      sum.mean_target_entropy /= static_cast<double>(ok);
      row.metric("mean_val_loss", sum.mean_validation_loss).metric("mean_target_entropy", sum.mean_target_entropy);
    } else {
      sum.mean_validation_loss = sum.mean_target_entropy = std::nan("");
      row.flag = "all splits failed";
    }
    row.metric("examples", static_cast<double>(sets[g].targets.rows()))
        .metric("failed_splits", static_cast<double>(sum.failed_splits))
        .metric("retried_splits", static_cast<double>(sum.retried_splits));
    out.summary.rows.push_back(std::move(row));
    out.groups.push_back(sum);
  }
  out.curves.notes["split_unit"] = "validation holds out whole sequences; the split unit is a declared choice";
  return out;
}

}  // namespace ctxprobe
