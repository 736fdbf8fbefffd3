#include "ctxprobe/models/masked_lm.hpp"

#include <cmath>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

TargetSet TargetSet::one_hot(std::span<const std::size_t> positions, std::span<const int> labels,
                             std::size_t alphabet_size) {
  TargetSet t;
  t.positions.assign(positions.begin(), positions.end());
  t.distributions = Matrix::Zero(static_cast<Eigen::Index>(positions.size()), static_cast<Eigen::Index>(alphabet_size));
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const int label = labels[positions[k]];
    if (label < 0 || static_cast<std::size_t>(label) >= alphabet_size) throw InvalidArgument("target label out of range");
    t.distributions(static_cast<Eigen::Index>(k), label) = 1.0;
  }
  return t;
}

double MaskedLm::loss(std::span<const int> tokens, const TargetSet& targets) const {
  return soft_cross_entropy(forward(tokens).logits, targets, nullptr);
}

void MaskedLm::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty()) throw InvalidArgument("empty token sequence");
  if (auto cap = context_limit(); cap && tokens.size() > *cap)
    throw ContextError("input of length " + std::to_string(tokens.size()) + " exceeds context of " +
                       std::to_string(*cap));
  for (int t : tokens)
    if (t < 0 || t > mask_token()) throw InvalidArgument("token out of vocabulary");
}

double soft_cross_entropy(const Matrix& logits, const TargetSet& targets, Matrix* dlogits) {
  const auto n = static_cast<double>(targets.positions.size());
  if (targets.positions.empty()) throw InvalidArgument("cross-entropy needs at least one target");
  if (dlogits) *dlogits = Matrix::Zero(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t k = 0; k < targets.positions.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(targets.positions[k]);
    if (i >= logits.rows()) throw InvalidArgument("target position out of range");
    const auto z = logits.row(i);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    const auto y = targets.distributions.row(static_cast<Eigen::Index>(k));
    total -= (y.array() * (z.array() - lse)).sum();
    if (dlogits) {
      dlogits->row(i) = ((z.array() - lse).exp() - y.array()) / n;
    }
  }
  return total / n;
}

}  // namespace ctxprobe
