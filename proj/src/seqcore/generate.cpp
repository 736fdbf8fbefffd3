#include "ctxprobe/seqcore/generate.hpp"

#include <algorithm>

#include "ctxprobe/error.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {
namespace {

std::vector<Symbol> draw_symbols(std::size_t length, std::size_t alphabet_size, Rng& rng) {
  std::vector<Symbol> out(length);
  for (auto& s : out) s = static_cast<Symbol>(rng.index(alphabet_size));
  return out;
}

}  // namespace

Sequence random_sequence(std::size_t length, const AlphabetPtr& alphabet, std::uint64_t seed, std::string id) {
  if (length == 0) throw InvalidArgument("random_sequence: length must be positive");
  Rng rng(seed);
  if (id.empty()) id = "random_" + std::to_string(seed);
  return Sequence(std::move(id), draw_symbols(length, alphabet->size(), rng), alphabet);
}

Sequence random_member(std::size_t min_length, std::size_t max_length, const AlphabetPtr& alphabet,
                       std::uint64_t seed, std::size_t index) {
  if (min_length == 0 || min_length > max_length) throw InvalidArgument("random_member: bad length range");
  Rng rng(derive_seed(seed, {index}));
  std::size_t length = rng.between(min_length, max_length);
  return Sequence("rand" + std::to_string(index), draw_symbols(length, alphabet->size(), rng), alphabet);
}

std::vector<Sequence> random_corpus(std::size_t count, std::size_t min_length, std::size_t max_length,
                                    const AlphabetPtr& alphabet, std::uint64_t seed) {
  std::vector<Sequence> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(random_member(min_length, max_length, alphabet, seed, k));
  return out;
}

Sequence multiply(const Sequence& x, std::size_t n) {
  if (n == 0) throw InvalidArgument("multiply: multiplicity must be positive");
  std::vector<Symbol> out;
  out.reserve(x.size() * n);
  for (std::size_t k = 0; k < n; ++k) out.insert(out.end(), x.symbols().begin(), x.symbols().end());
  return Sequence(x.id() + (n == 1 ? "" : "_x" + std::to_string(n)), std::move(out), x.alphabet_ptr());
}

NeedleHaystack make_needle_haystack(std::size_t needle_length, std::size_t haystack_length,
                                    const AlphabetPtr& alphabet, std::uint64_t seed) {
  if (needle_length == 0) throw InvalidArgument("make_needle_haystack: needle length must be positive");
  Rng rng(seed);
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    auto needle = draw_symbols(needle_length, alphabet->size(), rng);
    auto hay = draw_symbols(haystack_length, alphabet->size(), rng);
    std::vector<Symbol> full = needle;
    full.insert(full.end(), hay.begin(), hay.end());
    full.insert(full.end(), needle.begin(), needle.end());
    if (find_all(full, needle).size() != 2) continue;
    const std::size_t total = full.size();
    return NeedleHaystack{
        Sequence("needle" + std::to_string(needle_length) + "_hay" + std::to_string(haystack_length) + "_" +
                     std::to_string(seed),
                 std::move(full), alphabet),
        Span{0, needle_length}, Span{total - needle_length, total}};
  }
  throw InvalidArgument("make_needle_haystack: could not draw a haystack free of the needle after 100 attempts "
                        "(alphabet too small for needle " + std::to_string(needle_length) + ", haystack " +
                        std::to_string(haystack_length) + ")");
}

Sequence make_skip_pair(const Sequence& x, SkipPhase phase, std::uint64_t seed) {
  const std::size_t a = x.alphabet().size();
  if (a < 2) throw InvalidArgument("make_skip_pair: alphabet needs at least two symbols");
  if (x.size() < 2) throw InvalidArgument("make_skip_pair: sequence needs at least two symbols");
  Rng rng(seed);
  const std::size_t keep = phase == SkipPhase::even ? 0 : 1;
  std::vector<Symbol> y(x.symbols().begin(), x.symbols().end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i % 2 == keep) continue;
    // Uniform over the alphabet minus x_i.
    auto s = static_cast<Symbol>(rng.index(a - 1));
    y[i] = s >= x[i] ? static_cast<Symbol>(s + 1) : s;
  }
  return Sequence(x.id() + "_skip", std::move(y), x.alphabet_ptr());
}

Sequence complement(const Sequence& x) {
  if (!x.alphabet().has_complement()) throw InvalidArgument("alphabet lacks complement");
  std::vector<Symbol> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.alphabet().complement(x[i]);
  return Sequence(x.id() + "_comp", std::move(out), x.alphabet_ptr());
}

Sequence reverse(const Sequence& x) {
  std::vector<Symbol> out(x.symbols().rbegin(), x.symbols().rend());
  return Sequence(x.id() + "_rev", std::move(out), x.alphabet_ptr());
}

Sequence reverse_complement(const Sequence& x) { return reverse(complement(x)).with_id(x.id() + "_revcomp"); }

}  // namespace ctxprobe
