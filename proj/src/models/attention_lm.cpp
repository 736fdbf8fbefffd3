#include "ctxprobe/models/attention_lm.hpp"

#include <cmath>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

std::string_view scheme_name(PositionalScheme s) {
  switch (s) {
    case PositionalScheme::sinusoidal: return "sinusoidal";
    case PositionalScheme::learned: return "learned";
    case PositionalScheme::none: return "none";
  }
  return "none";
}

PositionalScheme scheme_from(const std::string& s) {
  if (s == "sinusoidal") return PositionalScheme::sinusoidal;
  if (s == "learned") return PositionalScheme::learned;
  if (s == "none") return PositionalScheme::none;
  throw InvalidArgument("unknown positional scheme '" + s + "'");
}

}  // namespace

void ToyAttentionConfig::validate() const {
  if (alphabet_size < 2) throw InvalidArgument("attention model: alphabet too small");
  if (depth < 1) throw InvalidArgument("attention model: depth must be at least 1");
  if (heads == 0 || width % heads != 0) throw InvalidArgument("attention model: width must be divisible by heads");
  if (positional == PositionalScheme::sinusoidal && width % 2 != 0)
    throw InvalidArgument("attention model: sinusoidal positions need an even width");
  if (context_cap == 0) throw InvalidArgument("attention model: context cap must be positive");
}

nlohmann::json ToyAttentionConfig::to_json() const {
  return {{"model", "attention"},       {"alphabet_size", alphabet_size}, {"depth", depth},
          {"width", width},             {"heads", heads},                 {"context_cap", context_cap},
          {"positional", scheme_name(positional)}, {"ffn_multiplier", ffn_multiplier},
          {"init_scale", init_scale},   {"seed", seed}};
}

ToyAttentionConfig ToyAttentionConfig::from_json(const nlohmann::json& j) {
  ToyAttentionConfig c;
  c.alphabet_size = j.value("alphabet_size", c.alphabet_size);
  c.depth = j.value("depth", c.depth);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.context_cap = j.value("context_cap", c.context_cap);
  c.positional = scheme_from(j.value("positional", std::string("sinusoidal")));
  c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.seed = j.value("seed", c.seed);
  return c;
}

struct ToyAttentionLm::LayerCache {
  Matrix x_in;
  LayerNormCache ln1;
  Matrix h1, q, k, v, o;
  std::vector<Matrix> attn;
  Matrix x_mid;
  LayerNormCache ln2;
  Matrix h2, u, g;
};

struct ToyAttentionLm::Cache {
  std::vector<int> tokens;
  std::vector<LayerCache> layers;
  Matrix x_final;
  LayerNormCache lnf;
  Matrix hf;
};

ToyAttentionLm::ToyAttentionLm(ToyAttentionConfig config) : config_(config) {
  config_.validate();
  const std::size_t a = config_.alphabet_size;
  const std::size_t d = config_.width;
  const std::size_t f = config_.ffn_multiplier * d;
  const double s = config_.init_scale;
  const std::uint64_t seed = config_.seed;

  embed_ = params_.add("embed", a + 1, d);
  params_.init_uniform(embed_, s, 1, seed);
  if (config_.positional == PositionalScheme::learned) {
    pos_ = params_.add("pos", config_.context_cap, d);
    params_.init_uniform(pos_, s * 0.1, 1, seed);
  }
  for (std::size_t l = 0; l < config_.depth; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerIds ids{};
    ids.ln1_g = params_.add(p + "ln1.gain", 1, d);
    params_.fill(ids.ln1_g, 1.0);
    ids.ln1_b = params_.add(p + "ln1.bias", 1, d);
    ids.wq = params_.add(p + "wq", d, d);
    ids.bq = params_.add(p + "bq", 1, d);
    ids.wk = params_.add(p + "wk", d, d);
    ids.bk = params_.add(p + "bk", 1, d);
    ids.wv = params_.add(p + "wv", d, d);
    ids.bv = params_.add(p + "bv", 1, d);
    ids.wo = params_.add(p + "wo", d, d);
    ids.bo = params_.add(p + "bo", 1, d);
    for (auto id : {ids.wq, ids.wk, ids.wv, ids.wo}) params_.init_uniform(id, s, d, seed);
    if (f > 0) {
      ids.ln2_g = params_.add(p + "ln2.gain", 1, d);
      params_.fill(ids.ln2_g, 1.0);
      ids.ln2_b = params_.add(p + "ln2.bias", 1, d);
      ids.w1 = params_.add(p + "w1", d, f);
      ids.b1 = params_.add(p + "b1", 1, f);
      ids.w2 = params_.add(p + "w2", f, d);
      ids.b2 = params_.add(p + "b2", 1, d);
      params_.init_uniform(ids.w1, s, d, seed);
      params_.init_uniform(ids.w2, s, f, seed);
    }
    layers_.push_back(ids);
  }
  lnf_g_ = params_.add("lnf.gain", 1, d);
  params_.fill(lnf_g_, 1.0);
  lnf_b_ = params_.add("lnf.bias", 1, d);
  wout_ = params_.add("wout", d, a);
  params_.init_uniform(wout_, s, d, seed);
  bout_ = params_.add("bout", 1, a);

  if (config_.positional == PositionalScheme::sinusoidal) {
    sinusoid_.resize(static_cast<Eigen::Index>(config_.context_cap), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < config_.context_cap; ++i)
      for (std::size_t k = 0; k < d; k += 2) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(d));
        sinusoid_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = std::sin(static_cast<double>(i) * freq);
        sinusoid_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + 1)) =
            std::cos(static_cast<double>(i) * freq);
      }
  }
}

Matrix ToyAttentionLm::run(std::span<const int> tokens, Cache* cache) const {
  check_tokens(tokens);
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const auto d = static_cast<Eigen::Index>(config_.width);
  const auto heads = static_cast<Eigen::Index>(config_.heads);
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto embed = params_.mat(embed_);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = embed.row(tokens[static_cast<std::size_t>(i)]);
  if (config_.positional == PositionalScheme::sinusoidal) x += sinusoid_.topRows(n);
  if (config_.positional == PositionalScheme::learned) x += params_.mat(pos_).topRows(n);

  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->layers.resize(layers_.size());
  }

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& ids = layers_[l];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[l] : local;
    c.x_in = x;
    c.h1 = layer_norm_forward(x, params_.mat(ids.ln1_g), params_.mat(ids.ln1_b), c.ln1);
    c.q = (c.h1 * params_.mat(ids.wq)).rowwise() + params_.mat(ids.bq).row(0);
    c.k = (c.h1 * params_.mat(ids.wk)).rowwise() + params_.mat(ids.bk).row(0);
    c.v = (c.h1 * params_.mat(ids.wv)).rowwise() + params_.mat(ids.bv).row(0);
    c.o.resize(n, d);
    c.attn.resize(static_cast<std::size_t>(heads));
    for (Eigen::Index h = 0; h < heads; ++h) {
      Matrix& a = c.attn[static_cast<std::size_t>(h)];
      a.noalias() = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose();
      a *= scale;
      softmax_rows_inplace(a);
      c.o.middleCols(h * dh, dh).noalias() = a * c.v.middleCols(h * dh, dh);
    }
    x.noalias() += c.o * params_.mat(ids.wo);
    x.rowwise() += params_.mat(ids.bo).row(0);
    if (config_.ffn_multiplier > 0) {
      c.x_mid = x;
      c.h2 = layer_norm_forward(x, params_.mat(ids.ln2_g), params_.mat(ids.ln2_b), c.ln2);
      c.u = (c.h2 * params_.mat(ids.w1)).rowwise() + params_.mat(ids.b1).row(0);
      c.g = c.u.unaryExpr([](double v) { return gelu(v); });
      x.noalias() += c.g * params_.mat(ids.w2);
      x.rowwise() += params_.mat(ids.b2).row(0);
    }
  }

  LayerNormCache lnf_local;
  Matrix hf = layer_norm_forward(x, params_.mat(lnf_g_), params_.mat(lnf_b_), cache ? cache->lnf : lnf_local);
  if (cache) {
    cache->x_final = x;
    cache->hf = hf;
  }
  return hf;
}

LmOutput ToyAttentionLm::forward(std::span<const int> tokens) const {
  LmOutput out;
  out.embeddings = run(tokens, nullptr);
  out.logits = (out.embeddings * params_.mat(wout_)).rowwise() + params_.mat(bout_).row(0);
  return out;
}

double ToyAttentionLm::loss_and_gradient(std::span<const int> tokens, const TargetSet& targets,
                                         std::span<double> gradient, double weight) const {
  if (gradient.size() != params_.size()) throw InvalidArgument("gradient buffer has wrong size");
  Cache cache;
  Matrix hf = run(tokens, &cache);
  Matrix logits = (hf * params_.mat(wout_)).rowwise() + params_.mat(bout_).row(0);
  Matrix dlogits;
  const double loss = soft_cross_entropy(logits, targets, &dlogits);
  dlogits *= weight;

  double* g = gradient.data();
  auto grad = [&](std::size_t id) { return ParamSet::view(g, params_.block(id)); };
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const auto d = static_cast<Eigen::Index>(config_.width);
  const auto heads = static_cast<Eigen::Index>(config_.heads);
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  grad(wout_).noalias() += hf.transpose() * dlogits;
  grad(bout_).row(0) += dlogits.colwise().sum();
  Matrix dhf = dlogits * params_.mat(wout_).transpose();
  Matrix dx = layer_norm_backward(dhf, params_.mat(lnf_g_), cache.lnf, grad(lnf_g_), grad(lnf_b_));

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& ids = layers_[li];
    const auto& c = cache.layers[li];
    if (config_.ffn_multiplier > 0) {
      grad(ids.w2).noalias() += c.g.transpose() * dx;
      grad(ids.b2).row(0) += dx.colwise().sum();
      Matrix du = (dx * params_.mat(ids.w2).transpose()).array() *
                  c.u.unaryExpr([](double v) { return gelu_derivative(v); }).array();
      grad(ids.w1).noalias() += c.h2.transpose() * du;
      grad(ids.b1).row(0) += du.colwise().sum();
      Matrix dh2 = du * params_.mat(ids.w1).transpose();
      dx += layer_norm_backward(dh2, params_.mat(ids.ln2_g), c.ln2, grad(ids.ln2_g), grad(ids.ln2_b));
    }
    grad(ids.wo).noalias() += c.o.transpose() * dx;
    grad(ids.bo).row(0) += dx.colwise().sum();
    Matrix dout = dx * params_.mat(ids.wo).transpose();
    Matrix dq(n, d), dk(n, d), dv(n, d);
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Matrix& a = c.attn[static_cast<std::size_t>(h)];
      auto doh = dout.middleCols(h * dh, dh);
      Matrix da = doh * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * doh;
      Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = a.array() * (da.colwise() - rowdot).array();
      ds *= scale;
      dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    grad(ids.wq).noalias() += c.h1.transpose() * dq;
    grad(ids.bq).row(0) += dq.colwise().sum();
    grad(ids.wk).noalias() += c.h1.transpose() * dk;
    grad(ids.bk).row(0) += dk.colwise().sum();
    grad(ids.wv).noalias() += c.h1.transpose() * dv;
    grad(ids.bv).row(0) += dv.colwise().sum();
    Matrix dh1 = dq * params_.mat(ids.wq).transpose();
    dh1.noalias() += dk * params_.mat(ids.wk).transpose();
    dh1.noalias() += dv * params_.mat(ids.wv).transpose();
    dx += layer_norm_backward(dh1, params_.mat(ids.ln1_g), c.ln1, grad(ids.ln1_g), grad(ids.ln1_b));
  }

  auto dembed = grad(embed_);
  for (Eigen::Index i = 0; i < n; ++i) dembed.row(cache.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
  if (config_.positional == PositionalScheme::learned) grad(pos_).topRows(n) += dx;
  return loss;
}

}  // namespace ctxprobe
