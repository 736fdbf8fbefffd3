#include "ctxprobe/models/params.hpp"

#include <cmath>

#include "ctxprobe/error.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

std::size_t ParamSet::add(std::string name, std::size_t rows, std::size_t cols) {
  ParamBlock b{std::move(name), values_.size(), rows, cols};
  values_.resize(values_.size() + b.size(), 0.0);
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

void ParamSet::init_uniform(std::size_t id, double scale, std::size_t fan_in, std::uint64_t seed) {
  const auto& b = blocks_.at(id);
  const double bound = scale / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Rng rng(derive_seed(seed, {id}));
  for (std::size_t k = 0; k < b.size(); ++k) values_[b.offset + k] = (2.0 * rng.unit() - 1.0) * bound;
}

void ParamSet::fill(std::size_t id, double value) {
  const auto& b = blocks_.at(id);
  std::fill(values_.begin() + static_cast<std::ptrdiff_t>(b.offset),
            values_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()), value);
}

Matrix layer_norm_forward(const Matrix& x, ConstMatrixMap gain, ConstMatrixMap bias, LayerNormCache& cache) {
  const auto n = x.rows();
  const auto d = static_cast<double>(x.cols());
  cache.normalized.resize(n, x.cols());
  cache.inv_sigma.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mean).square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_sigma(i) = inv;
    cache.normalized.row(i) = (x.row(i).array() - mean) * inv;
  }
  Matrix y = cache.normalized.array().rowwise() * gain.row(0).array();
  y.array().rowwise() += bias.row(0).array();
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, ConstMatrixMap gain, const LayerNormCache& cache, MatrixMap dgain,
                           MatrixMap dbias) {
  const auto& xhat = cache.normalized;
  dgain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / d;
    const double mean_dx = (dxhat.row(i).array() * xhat.row(i).array()).sum() / d;
    dx.row(i) = cache.inv_sigma(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dx;
}

double gelu(double u) noexcept {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
}

double gelu_derivative(double u) noexcept {
  const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

void softmax_rows_inplace(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace ctxprobe
