#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ctxprobe {

// One probability vector over the alphabet per covered sequence position.
class DistributionMatrix {
 public:
  explicit DistributionMatrix(std::size_t width = 0) : width_(width) {}
  DistributionMatrix(std::size_t width, std::vector<std::size_t> positions, std::vector<double> values);

  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t rows() const noexcept { return positions_.size(); }
  [[nodiscard]] bool empty() const noexcept { return positions_.empty(); }
  [[nodiscard]] const std::vector<std::size_t>& positions() const noexcept { return positions_; }
  [[nodiscard]] std::size_t position(std::size_t row) const { return positions_.at(row); }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * width_, width_};
  }
  [[nodiscard]] std::span<double> row(std::size_t r) { return {values_.data() + r * width_, width_}; }
  [[nodiscard]] std::optional<std::size_t> row_of(std::size_t position) const;
  // Row for a sequence position; throws when the position is not covered.
  [[nodiscard]] std::span<const double> at_position(std::size_t position) const;
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

  void append(std::size_t position, std::span<const double> row);
  // Throws unless every row is nonnegative and sums to 1 within tolerance.
  void validate(double tolerance = 1e-6) const;

  bool operator==(const DistributionMatrix&) const = default;

 private:
  std::size_t width_;
  std::vector<std::size_t> positions_;
  std::vector<double> values_;
};

}  // namespace ctxprobe
