#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

enum class EditKind { substitution, insertion, deletion };

struct MutationSpec {
  double proportion = 0.1;
  // Relative weights of {substitution, insertion, deletion}.
  std::array<double, 3> op_weights{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;

  void validate() const;
};

// One edit in source coordinates. Insertions place `symbol` immediately
// before source position `position`; deletions ignore `symbol`.
struct EditEvent {
  EditKind kind;
  std::size_t position;
  Symbol symbol = 0;
};

struct EditTrace {
  // Application order: strictly decreasing source position.
  std::vector<EditEvent> events;
  // Output position of each source symbol, empty when deleted.
  std::vector<std::optional<std::size_t>> source_to_output;
  // Source position of each output symbol, empty when inserted.
  std::vector<std::optional<std::size_t>> output_to_source;
};

struct MutatedCopy {
  Sequence sequence;
  EditTrace trace;
};

// Edits exactly round(proportion * |x|) distinct positions of x. Edits are
// applied right to left so that every event's source coordinate stays valid.
MutatedCopy mutate_copy(const Sequence& x, const MutationSpec& spec);

// Replays trace.events on x.
Sequence apply_edits(const Sequence& x, const EditTrace& trace);

}  // namespace ctxprobe
