#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

// Synthetic training corpus. Background sequences come from one of
// n_families fixed positional profiles (each position's distribution drawn
// from a symmetric Dirichlet with `concentration`); n_families == 0 means
// i.i.d. uniform symbols. With probability dup_fraction a segment of the
// sequence is copied to a second, non-overlapping offset.
struct CorpusSpec {
  AlphabetPtr alphabet;
  std::size_t n_families = 0;
  double dup_fraction = 0.5;
  std::size_t min_length = 32;
  std::size_t max_length = 96;
  std::size_t min_segment = 8;
  // Segment length range as fractions of the sequence length.
  double min_segment_fraction = 0.25;
  double max_segment_fraction = 0.5;
  // When set, the gap between the end of the first copy and the start of the
  // second is at most this many symbols.
  std::optional<std::size_t> max_copy_gap;
  double concentration = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorpusMember {
  Sequence sequence;
  // Start offsets and length of the duplicated segment, if any.
  std::optional<std::size_t> first_copy;
  std::optional<std::size_t> second_copy;
  std::size_t segment_length = 0;
  std::optional<std::size_t> family;
};

// Per-family positional profiles: [family][position][symbol], max_length rows.
std::vector<std::vector<std::vector<double>>> family_profiles(const CorpusSpec& spec);

// Member k depends only on (spec, k).
CorpusMember sample_member(const CorpusSpec& spec, std::size_t index,
                           const std::vector<std::vector<std::vector<double>>>& profiles);
std::vector<CorpusMember> sample_corpus_detail(const CorpusSpec& spec, std::size_t n);
std::vector<Sequence> sample_corpus(const CorpusSpec& spec, std::size_t n);

}  // namespace ctxprobe
