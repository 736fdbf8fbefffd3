#pragma once

#include <cstdint>
#include <vector>

#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

// i.i.d. uniform symbols. Pure function of (length, alphabet, seed).
Sequence random_sequence(std::size_t length, const AlphabetPtr& alphabet, std::uint64_t seed, std::string id = {});

// Member `index` of a random corpus: its length is drawn uniformly from
// [min_length, max_length] and its symbols come from the same stream, both
// seeded by derive_seed(seed, {index}). Probes that build random units use
// this so that equal (seed, index, length) give equal units everywhere.
Sequence random_member(std::size_t min_length, std::size_t max_length, const AlphabetPtr& alphabet,
                       std::uint64_t seed, std::size_t index);
std::vector<Sequence> random_corpus(std::size_t count, std::size_t min_length, std::size_t max_length,
                                    const AlphabetPtr& alphabet, std::uint64_t seed);

// x repeated n times.
Sequence multiply(const Sequence& x, std::size_t n);

struct NeedleHaystack {
  Sequence sequence;
  Span needle1;
  Span needle2;
};

// needle ‖ haystack ‖ needle, with the needle occurring exactly twice in the
// result. Gives up after 100 rejected draws.
NeedleHaystack make_needle_haystack(std::size_t needle_length, std::size_t haystack_length,
                                    const AlphabetPtr& alphabet, std::uint64_t seed);

enum class SkipPhase { even, odd };

// Copy of x that keeps x at positions whose parity matches `phase` and holds a
// uniformly drawn different symbol everywhere else.
Sequence make_skip_pair(const Sequence& x, SkipPhase phase, std::uint64_t seed);

Sequence complement(const Sequence& x);
Sequence reverse(const Sequence& x);
Sequence reverse_complement(const Sequence& x);

}  // namespace ctxprobe
