#include "ctxprobe/models/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "ctxprobe/error.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {

void CorpusSpec::validate() const {
  if (!alphabet) throw InvalidArgument("corpus spec needs an alphabet");
  if (!(dup_fraction >= 0.0 && dup_fraction <= 1.0)) throw InvalidArgument("dup_fraction must lie in [0, 1]");
  if (min_length == 0 || min_length > max_length) throw InvalidArgument("bad corpus length range");
  if (min_segment == 0) throw InvalidArgument("min_segment must be positive");
  if (!(min_segment_fraction > 0.0 && min_segment_fraction <= max_segment_fraction && max_segment_fraction <= 0.5))
    throw InvalidArgument("segment fractions must satisfy 0 < min <= max <= 0.5");
  if (dup_fraction > 0.0 && 2 * min_segment > max_length)
    throw InvalidArgument("max_length too short for two copies of min_segment");
  if (!(concentration > 0.0)) throw InvalidArgument("concentration must be positive");
}

std::vector<std::vector<std::vector<double>>> family_profiles(const CorpusSpec& spec) {
  spec.validate();
  const std::size_t a = spec.alphabet->size();
  std::vector<std::vector<std::vector<double>>> out(spec.n_families);
  for (std::size_t k = 0; k < spec.n_families; ++k) {
    Rng rng(derive_seed(spec.seed, {0xFA111u, k}));
    std::gamma_distribution<double> gamma(spec.concentration, 1.0);
    out[k].resize(spec.max_length);
    for (auto& row : out[k]) {
      row.resize(a);
      double total = 0.0;
      for (double& v : row) {
        v = gamma(rng.engine());
        total += v;
      }
      if (total <= 0.0) {
        std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(a));
        continue;
      }
      for (double& v : row) v /= total;
    }
  }
  return out;
}

CorpusMember sample_member(const CorpusSpec& spec, std::size_t index,
                           const std::vector<std::vector<std::vector<double>>>& profiles) {
  Rng rng(derive_seed(spec.seed, {index}));
  const std::size_t a = spec.alphabet->size();
  CorpusMember m{Sequence("x", {0}, spec.alphabet), std::nullopt, std::nullopt, 0, std::nullopt};
  const bool duplicate = rng.unit() < spec.dup_fraction;

  for (;;) {
    const std::size_t n = rng.between(spec.min_length, spec.max_length);
    std::vector<Symbol> s(n);
    if (spec.n_families == 0) {
      for (auto& v : s) v = static_cast<Symbol>(rng.index(a));
    } else {
      const std::size_t k = rng.index(spec.n_families);
      m.family = k;
      for (std::size_t p = 0; p < n; ++p) s[p] = static_cast<Symbol>(rng.weighted(profiles[k][p]));
    }
    if (duplicate) {
      const auto lo = std::max(spec.min_segment,
                               static_cast<std::size_t>(std::ceil(spec.min_segment_fraction * static_cast<double>(n))));
      const auto hi = static_cast<std::size_t>(std::floor(spec.max_segment_fraction * static_cast<double>(n)));
      if (lo > hi || 2 * lo > n) continue;  // length cannot host two copies
      const std::size_t len = rng.between(lo, hi);
      bool placed = false;
      for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        const std::size_t first = rng.index(n - len + 1);
        const std::size_t second = rng.index(n - len + 1);
        const std::size_t lo_off = std::min(first, second);
        const std::size_t hi_off = std::max(first, second);
        if (hi_off < lo_off + len) continue;
        if (spec.max_copy_gap && hi_off - (lo_off + len) > *spec.max_copy_gap) continue;
        std::copy(s.begin() + static_cast<long>(first), s.begin() + static_cast<long>(first + len),
                  s.begin() + static_cast<long>(second));
        m.first_copy = lo_off;
        m.second_copy = hi_off;
        m.segment_length = len;
        placed = true;
      }
      if (!placed) continue;  // resample the length
    }
    m.sequence = Sequence("corpus" + std::to_string(index), std::move(s), spec.alphabet);
    return m;
  }
}

std::vector<CorpusMember> sample_corpus_detail(const CorpusSpec& spec, std::size_t n) {
  if (n == 0) throw InvalidArgument("sample_corpus: n must be positive");
  const auto profiles = family_profiles(spec);
  std::vector<CorpusMember> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(sample_member(spec, k, profiles));
  return out;
}

std::vector<Sequence> sample_corpus(const CorpusSpec& spec, std::size_t n) {
  auto detail = sample_corpus_detail(spec, n);
  std::vector<Sequence> out;
  out.reserve(n);
  for (auto& m : detail) out.push_back(std::move(m.sequence));
  return out;
}

}  // namespace ctxprobe
