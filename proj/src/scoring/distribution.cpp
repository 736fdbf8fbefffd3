#include "ctxprobe/scoring/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

DistributionMatrix::DistributionMatrix(std::size_t width, std::vector<std::size_t> positions,
                                       std::vector<double> values)
    : width_(width), positions_(std::move(positions)), values_(std::move(values)) {
  if (values_.size() != positions_.size() * width_) throw InvalidArgument("distribution matrix shape mismatch");
}

std::optional<std::size_t> DistributionMatrix::row_of(std::size_t position) const {
  // Rows are usually stored in ascending position order; fall back to a scan.
  auto it = std::lower_bound(positions_.begin(), positions_.end(), position);
  if (it != positions_.end() && *it == position) return static_cast<std::size_t>(it - positions_.begin());
  auto lin = std::find(positions_.begin(), positions_.end(), position);
  if (lin != positions_.end()) return static_cast<std::size_t>(lin - positions_.begin());
  return std::nullopt;
}

std::span<const double> DistributionMatrix::at_position(std::size_t position) const {
  auto r = row_of(position);
  if (!r) throw InvalidArgument("profile does not cover position " + std::to_string(position));
  return row(*r);
}

void DistributionMatrix::append(std::size_t position, std::span<const double> r) {
  if (r.size() != width_) throw InvalidArgument("distribution row has wrong width");
  positions_.push_back(position);
  values_.insert(values_.end(), r.begin(), r.end());
}

void DistributionMatrix::validate(double tolerance) const {
  for (std::size_t r = 0; r < rows(); ++r) {
    double sum = 0.0;
    for (double p : row(r)) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw InvalidArgument("negative or non-finite probability at position " + std::to_string(positions_[r]));
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw InvalidArgument("distribution at position " + std::to_string(positions_[r]) + " sums to " +
                            std::to_string(sum));
  }
}

}  // namespace ctxprobe
