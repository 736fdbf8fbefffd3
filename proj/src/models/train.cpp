#include "ctxprobe/models/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ctxprobe/error.hpp"
#include "ctxprobe/models/attention_lm.hpp"
#include "ctxprobe/models/conv_lm.hpp"

namespace ctxprobe {

void TrainConfig::validate() const {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw InvalidArgument("mask_rate must lie in (0, 1)");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
    throw InvalidArgument("final_lr_fraction must lie in [0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be positive");
  if (clip_norm < 0.0) throw InvalidArgument("clip_norm must be non-negative");
  if (snapshot_every == 0) throw InvalidArgument("snapshot_every must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"mask_rate", mask_rate},         {"steps", steps},
          {"batch_size", batch_size},       {"learning_rate", learning_rate},
          {"warmup_steps", warmup_steps},   {"final_lr_fraction", final_lr_fraction},
          {"beta1", beta1},                 {"beta2", beta2},
          {"epsilon", epsilon},             {"clip_norm", clip_norm},
          {"mixed_corruption", mixed_corruption}, {"snapshot_every", snapshot_every},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.mask_rate = j.value("mask_rate", c.mask_rate);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.mixed_corruption = j.value("mixed_corruption", c.mixed_corruption);
  c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Adam::Adam(std::size_t size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> gradient, double learning_rate) {
  if (params.size() != m_.size() || gradient.size() != m_.size()) throw InvalidArgument("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * gradient[k];
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * gradient[k] * gradient[k];
    params[k] -= learning_rate * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + epsilon_);
  }
}

double scheduled_learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup_steps) return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  const std::size_t span = cfg.steps > cfg.warmup_steps ? cfg.steps - cfg.warmup_steps : 1;
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span));
  const double floor = cfg.final_lr_fraction;
  return cfg.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

MaskedExample make_masked_example(const Sequence& x, std::size_t mask_token, const TrainConfig& cfg, Rng& rng) {
  const std::size_t n = x.size();
  std::vector<std::size_t> positions;
  for (std::size_t p = 0; p < n; ++p)
    if (rng.unit() < cfg.mask_rate) positions.push_back(p);
  if (positions.empty()) positions.push_back(rng.index(n));

  std::vector<int> labels(x.symbols().begin(), x.symbols().end());
  MaskedExample ex{labels, TargetSet::one_hot(positions, labels, mask_token)};
  for (std::size_t p : positions) {
    if (!cfg.mixed_corruption) {
      ex.tokens[p] = static_cast<int>(mask_token);
      continue;
    }
    const double u = rng.unit();
    if (u < 0.8) {
      ex.tokens[p] = static_cast<int>(mask_token);
    } else if (u < 0.9) {
      ex.tokens[p] = static_cast<int>(rng.index(mask_token));
    }
  }
  return ex;
}

TrainResult train_masked_lm(MaskedLm& model, std::span<const Sequence> corpus, const TrainConfig& cfg,
                            const StepCallback& on_step) {
  cfg.validate();
  if (corpus.empty()) throw InvalidArgument("train_masked_lm: corpus is empty");
  for (const auto& x : corpus)
    if (x.alphabet().size() != model.alphabet_size()) throw InvalidArgument("corpus alphabet does not match the model");

  auto params = model.params().values();
  Adam adam(params.size(), cfg.beta1, cfg.beta2, cfg.epsilon);
  std::vector<double> gradient(params.size());
  std::vector<double> snapshot(params.begin(), params.end());
  std::size_t snapshot_step = 0;

  Rng rng(derive_seed(cfg.seed, {0x7A1Eu}));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::size_t cursor = 0;

  TrainResult result;
  result.loss_trace.reserve(cfg.steps);
  const double weight = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step % cfg.snapshot_every == 0) {
      std::copy(params.begin(), params.end(), snapshot.begin());
      snapshot_step = step;
    }
    std::fill(gradient.begin(), gradient.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      const Sequence& x = corpus[order[cursor++]];
      const auto ex = make_masked_example(x, model.alphabet_size(), cfg, rng);
      loss += weight * model.loss_and_gradient(ex.tokens, ex.targets, gradient, weight);
    }
    const double norm = std::sqrt(std::inner_product(gradient.begin(), gradient.end(), gradient.begin(), 0.0));
    if (!std::isfinite(loss) || !std::isfinite(norm)) {
      std::copy(snapshot.begin(), snapshot.end(), params.begin());
      result.diverged = true;
      result.restored_step = snapshot_step;
      return result;
    }
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm)
      for (double& g : gradient) g *= cfg.clip_norm / norm;
    adam.step(params, gradient, scheduled_learning_rate(cfg, step));
    result.loss_trace.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return result;
}

void write_loss_trace(const std::filesystem::path& path, std::span<const double> trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write loss trace: " + path.string());
  out << "step,loss\n";
  out.precision(17);
  for (std::size_t k = 0; k < trace.size(); ++k) out << k << ',' << trace[k] << '\n';
}

std::vector<double> smooth_trace(std::span<const double> trace, std::size_t window) {
  if (window == 0) throw InvalidArgument("smoothing window must be positive");
  std::vector<double> out(trace.size());
  double running = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    running += trace[k];
    if (k >= window) running -= trace[k - window];
    out[k] = running / static_cast<double>(std::min(k + 1, window));
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

std::unique_ptr<MaskedLm> make_model(const nlohmann::json& header) {
  const std::string kind = header.at("kind");
  if (kind == "attention") return std::make_unique<ToyAttentionLm>(ToyAttentionConfig::from_json(header.at("config")));
  if (kind == "conv") return std::make_unique<ToyConvLm>(ToyConvConfig::from_json(header.at("config")));
  throw InvalidArgument("unknown model kind: " + kind);
}

// Layout: 8-byte magic, u32 version, u64 header length, JSON header (kind,
// config, parameter blocks), u64 parameter count, raw little-endian doubles.
void save_checkpoint(const MaskedLm& model, const std::filesystem::path& path) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : model.params().blocks()) blocks.push_back({b.name, b.rows, b.cols});
  const std::string header = nlohmann::json{{"kind", model.kind()}, {"config", model.config_json()}, {"blocks", blocks}}.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const auto values = model.params().values();
    write_pod(out, static_cast<std::uint64_t>(values.size()));
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw Error("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<MaskedLm> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a checkpoint: " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  const auto header_size = read_pod<std::uint64_t>(in);
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw Error("truncated checkpoint");
  const auto meta = nlohmann::json::parse(header);
  auto model = make_model(meta);

  const auto& blocks = model->params().blocks();
  const auto& saved = meta.at("blocks");
  if (saved.size() != blocks.size()) throw Error("checkpoint parameter layout differs from model");
  for (std::size_t k = 0; k < blocks.size(); ++k)
    if (saved[k][0] != blocks[k].name || saved[k][1] != blocks[k].rows || saved[k][2] != blocks[k].cols)
      throw Error("checkpoint parameter layout differs from model at block " + blocks[k].name);

  const auto count = read_pod<std::uint64_t>(in);
  auto values = model->params().values();
  if (count != values.size()) throw Error("checkpoint parameter count differs from model");
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw Error("truncated checkpoint");
  return model;
}

GradCheckResult grad_check(MaskedLm& model, std::span<const int> tokens, const TargetSet& targets,
                           std::size_t samples, double step, std::uint64_t seed, double denominator_floor) {
  auto params = model.params().values();
  std::vector<double> analytic(params.size(), 0.0);
  model.loss_and_gradient(tokens, targets, analytic, 1.0);

  GradCheckResult r;
  r.gradient_norm = std::sqrt(std::inner_product(analytic.begin(), analytic.end(), analytic.begin(), 0.0));
  Rng rng(seed);
  std::vector<std::size_t> chosen(params.size());
  std::iota(chosen.begin(), chosen.end(), 0);
  const std::size_t n = std::min(samples, params.size());
  for (std::size_t k = 0; k < n; ++k) std::swap(chosen[k], chosen[k + rng.index(chosen.size() - k)]);

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = chosen[k];
    const double saved = params[idx];
    params[idx] = saved + step;
    const double up = model.loss(tokens, targets);
    params[idx] = saved - step;
    const double down = model.loss(tokens, targets);
    params[idx] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), denominator_floor});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic[idx] - numeric) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace ctxprobe
