#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ctxprobe {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  [[nodiscard]] std::size_t size() const noexcept { return rows * cols; }
};

// All trainable values of a model in one flat array; named blocks are
// row-major matrices viewing into it. Gradients use the same layout.
class ParamSet {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  [[nodiscard]] const ParamBlock& block(std::size_t id) const { return blocks_.at(id); }
  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  [[nodiscard]] MatrixMap mat(std::size_t id) { return view(values_.data(), blocks_.at(id)); }
  [[nodiscard]] ConstMatrixMap mat(std::size_t id) const { return view(values_.data(), blocks_.at(id)); }

  static MatrixMap view(double* base, const ParamBlock& b) {
    return MatrixMap(base + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  }
  static ConstMatrixMap view(const double* base, const ParamBlock& b) {
    return ConstMatrixMap(base + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  }

  // Symmetric uniform in ±scale/sqrt(fan_in) for the named block.
  void init_uniform(std::size_t id, double scale, std::size_t fan_in, std::uint64_t seed);
  void fill(std::size_t id, double value);

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<double> values_;
};

// Per-position layer normalization with learned gain and bias.
struct LayerNormCache {
  Matrix normalized;  // (x - mean) / sigma
  Eigen::VectorXd inv_sigma;
};

Matrix layer_norm_forward(const Matrix& x, ConstMatrixMap gain, ConstMatrixMap bias, LayerNormCache& cache);
// Returns dL/dx and accumulates dL/dgain, dL/dbias.
Matrix layer_norm_backward(const Matrix& dy, ConstMatrixMap gain, const LayerNormCache& cache, MatrixMap dgain,
                           MatrixMap dbias);

// Tanh approximation of GELU.
double gelu(double u) noexcept;
double gelu_derivative(double u) noexcept;

void softmax_rows_inplace(Matrix& m);

}  // namespace ctxprobe
