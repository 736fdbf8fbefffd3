#include "ctxprobe/models/native_scorer.hpp"

#include "ctxprobe/error.hpp"

namespace ctxprobe {

NativeModelScorer::NativeModelScorer(std::shared_ptr<const MaskedLm> model, AlphabetPtr alphabet, std::string name)
    : model_(std::move(model)), alphabet_(std::move(alphabet)), name_(std::move(name)) {
  if (!model_) throw InvalidArgument("native scorer needs a model");
  if (model_->alphabet_size() != alphabet_->size())
    throw InvalidArgument("model vocabulary does not match the alphabet");
  if (name_.empty()) name_ = "toy-" + model_->kind();
}

Capabilities NativeModelScorer::capabilities() const {
  Capabilities c;
  c.embeddings = true;
  c.embedding_width = model_->embedding_width();
  c.context_limit = model_->context_limit();
  return c;
}

std::vector<int> NativeModelScorer::tokens(const Sequence& x, std::span<const std::size_t> masked) const {
  std::vector<int> t(x.symbols().begin(), x.symbols().end());
  for (std::size_t p : masked) t.at(p) = model_->mask_token();
  return t;
}

ScorerResponse NativeModelScorer::score(const ScorerQuery& query) const {
  query.validate();
  check_query_fits(*this, query);
  if (!(query.sequence.alphabet() == *alphabet_)) throw InvalidArgument("query alphabet differs from model alphabet");
  const auto t = tokens(query.sequence, query.masked_positions);
  LmOutput out = model_->forward(t);
  softmax_rows_inplace(out.logits);

  ScorerResponse r{DistributionMatrix(alphabet_->size()), std::nullopt};
  if (query.wants.distributions) {
    for (std::size_t p : query.covered_positions()) {
      const auto row = out.logits.row(static_cast<Eigen::Index>(p));
      r.distributions.append(p, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
  }
  if (query.wants.embeddings) {
    EmbeddingMatrix e;
    e.width = static_cast<std::size_t>(out.embeddings.cols());
    e.values.assign(out.embeddings.data(), out.embeddings.data() + out.embeddings.size());
    r.embeddings = std::move(e);
  }
  return r;
}

}  // namespace ctxprobe
