#include "ctxprobe/models/conv_lm.hpp"

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

// Row i holds the kernel-wide window of x centred on i, zero padded.
Matrix im2col(const Matrix& x, std::size_t kernel) {
  const auto n = x.rows();
  const auto c = x.cols();
  const auto k = static_cast<Eigen::Index>(kernel);
  const auto r = k / 2;
  Matrix col = Matrix::Zero(n, k * c);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index o = 0; o < k; ++o) {
      const Eigen::Index src = i + o - r;
      if (src >= 0 && src < n) col.block(i, o * c, 1, c) = x.row(src);
    }
  return col;
}

}  // namespace

void ToyConvConfig::validate() const {
  if (alphabet_size < 2) throw InvalidArgument("conv model: alphabet too small");
  if (layers < 1) throw InvalidArgument("conv model: needs at least one layer");
  if (kernel % 2 == 0) throw InvalidArgument("conv model: kernel width must be odd");
  if (channels == 0) throw InvalidArgument("conv model: channels must be positive");
}

nlohmann::json ToyConvConfig::to_json() const {
  return {{"model", "conv"}, {"alphabet_size", alphabet_size}, {"layers", layers},
          {"kernel", kernel}, {"channels", channels},           {"init_scale", init_scale},
          {"seed", seed},     {"receptive_field", receptive_field()}};
}

ToyConvConfig ToyConvConfig::from_json(const nlohmann::json& j) {
  ToyConvConfig c;
  c.alphabet_size = j.value("alphabet_size", c.alphabet_size);
  c.layers = j.value("layers", c.layers);
  c.kernel = j.value("kernel", c.kernel);
  c.channels = j.value("channels", c.channels);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.seed = j.value("seed", c.seed);
  return c;
}

struct ToyConvLm::Cache {
  std::vector<int> tokens;
  std::vector<LayerNormCache> ln;
  std::vector<Matrix> col;
  std::vector<Matrix> u;
  LayerNormCache lnf;
};

ToyConvLm::ToyConvLm(ToyConvConfig config) : config_(config) {
  config_.validate();
  const std::size_t a = config_.alphabet_size;
  const std::size_t c = config_.channels;
  const std::size_t k = config_.kernel;
  embed_ = params_.add("embed", a + 1, c);
  params_.init_uniform(embed_, config_.init_scale, 1, config_.seed);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerIds ids{};
    ids.ln_g = params_.add(p + "ln.gain", 1, c);
    params_.fill(ids.ln_g, 1.0);
    ids.ln_b = params_.add(p + "ln.bias", 1, c);
    ids.w = params_.add(p + "conv.weight", k * c, c);
    params_.init_uniform(ids.w, config_.init_scale, k * c, config_.seed);
    ids.b = params_.add(p + "conv.bias", 1, c);
    layers_.push_back(ids);
  }
  lnf_g_ = params_.add("lnf.gain", 1, c);
  params_.fill(lnf_g_, 1.0);
  lnf_b_ = params_.add("lnf.bias", 1, c);
  wout_ = params_.add("wout", c, a);
  params_.init_uniform(wout_, config_.init_scale, c, config_.seed);
  bout_ = params_.add("bout", 1, a);
}

Matrix ToyConvLm::run(std::span<const int> tokens, Cache* cache) const {
  check_tokens(tokens);
  const auto n = static_cast<Eigen::Index>(tokens.size());
  auto embed = params_.mat(embed_);
  Matrix x(n, static_cast<Eigen::Index>(config_.channels));
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = embed.row(tokens[static_cast<std::size_t>(i)]);
  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->ln.resize(layers_.size());
    cache->col.resize(layers_.size());
    cache->u.resize(layers_.size());
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& ids = layers_[l];
    LayerNormCache ln_local;
    Matrix h = layer_norm_forward(x, params_.mat(ids.ln_g), params_.mat(ids.ln_b), cache ? cache->ln[l] : ln_local);
    Matrix col = im2col(h, config_.kernel);
    Matrix u = (col * params_.mat(ids.w)).rowwise() + params_.mat(ids.b).row(0);
    x += u.unaryExpr([](double v) { return gelu(v); });
    if (cache) {
      cache->col[l] = std::move(col);
      cache->u[l] = std::move(u);
    }
  }
  LayerNormCache lnf_local;
  return layer_norm_forward(x, params_.mat(lnf_g_), params_.mat(lnf_b_), cache ? cache->lnf : lnf_local);
}

LmOutput ToyConvLm::forward(std::span<const int> tokens) const {
  LmOutput out;
  out.embeddings = run(tokens, nullptr);
  out.logits = (out.embeddings * params_.mat(wout_)).rowwise() + params_.mat(bout_).row(0);
  return out;
}

double ToyConvLm::loss_and_gradient(std::span<const int> tokens, const TargetSet& targets,
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
  const auto c = static_cast<Eigen::Index>(config_.channels);
  const auto k = static_cast<Eigen::Index>(config_.kernel);
  const auto r = k / 2;

  grad(wout_).noalias() += hf.transpose() * dlogits;
  grad(bout_).row(0) += dlogits.colwise().sum();
  Matrix dx = layer_norm_backward(dlogits * params_.mat(wout_).transpose(), params_.mat(lnf_g_), cache.lnf,
                                  grad(lnf_g_), grad(lnf_b_));

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& ids = layers_[l];
    Matrix du = dx.array() * cache.u[l].unaryExpr([](double v) { return gelu_derivative(v); }).array();
    grad(ids.w).noalias() += cache.col[l].transpose() * du;
    grad(ids.b).row(0) += du.colwise().sum();
    Matrix dcol = du * params_.mat(ids.w).transpose();
    Matrix dh = Matrix::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index o = 0; o < k; ++o) {
        const Eigen::Index src = i + o - r;
        if (src >= 0 && src < n) dh.row(src) += dcol.block(i, o * c, 1, c);
      }
    dx += layer_norm_backward(dh, params_.mat(ids.ln_g), cache.ln[l], grad(ids.ln_g), grad(ids.ln_b));
  }

  auto dembed = grad(embed_);
  for (Eigen::Index i = 0; i < n; ++i) dembed.row(cache.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
  return loss;
}

}  // namespace ctxprobe
