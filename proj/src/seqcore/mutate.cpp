#include "ctxprobe/seqcore/mutate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxprobe/error.hpp"
#include "ctxprobe/seqcore/random.hpp"

namespace ctxprobe {
namespace {

std::vector<Symbol> replay(std::span<const Symbol> source, const std::vector<EditEvent>& events) {
  std::vector<Symbol> out(source.begin(), source.end());
  std::size_t previous = source.size() + 1;
  for (const auto& e : events) {
    if (e.position >= source.size() || e.position >= previous)
      throw InvalidArgument("edit trace events must be in range and strictly right to left");
    previous = e.position;
    auto at = out.begin() + static_cast<std::ptrdiff_t>(e.position);
    switch (e.kind) {
      case EditKind::substitution: *at = e.symbol; break;
      case EditKind::insertion: out.insert(at, e.symbol); break;
      case EditKind::deletion: out.erase(at); break;
    }
  }
  return out;
}

}  // namespace

void MutationSpec::validate() const {
  if (!(proportion > 0.0 && proportion <= 1.0)) throw InvalidArgument("mutation proportion must lie in (0, 1]");
  double total = 0.0;
  for (double w : op_weights) {
    if (!(w >= 0.0)) throw InvalidArgument("mutation op weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw InvalidArgument("mutation op weights must not all be zero");
}

MutatedCopy mutate_copy(const Sequence& x, const MutationSpec& spec) {
  spec.validate();
  if (x.size() < 2) throw InvalidArgument("mutate_copy: sequence needs at least two symbols");
  const auto count = static_cast<std::size_t>(std::llround(spec.proportion * static_cast<double>(x.size())));
  if (count == 0) throw InvalidArgument("no-op mutation");
  const std::size_t a = x.alphabet().size();

  Rng rng(spec.seed);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = 0; k < count; ++k) std::swap(order[k], order[k + rng.index(order.size() - k)]);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(chosen.begin(), chosen.end(), std::greater<>());

  EditTrace trace;
  trace.events.reserve(count);
  for (std::size_t p : chosen) {
    auto kind = static_cast<EditKind>(rng.weighted(spec.op_weights));
    EditEvent e{kind, p, 0};
    if (kind == EditKind::substitution) {
      auto s = static_cast<Symbol>(rng.index(a - 1));
      e.symbol = s >= x[p] ? static_cast<Symbol>(s + 1) : s;
    } else if (kind == EditKind::insertion) {
      e.symbol = static_cast<Symbol>(rng.index(a));
    }
    trace.events.push_back(e);
  }

  auto symbols = replay(x.symbols(), trace.events);
  if (symbols.empty()) throw InvalidArgument("mutate_copy: edits deleted the entire sequence");

  // Alignment: walk source left to right, consuming events in ascending order.
  trace.source_to_output.assign(x.size(), std::nullopt);
  trace.output_to_source.assign(symbols.size(), std::nullopt);
  std::vector<EditKind> kind_at(x.size(), EditKind::substitution);
  std::vector<bool> edited(x.size(), false);
  for (const auto& e : trace.events) {
    kind_at[e.position] = e.kind;
    edited[e.position] = true;
  }
  std::size_t out = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (edited[i] && kind_at[i] == EditKind::insertion) ++out;
    if (edited[i] && kind_at[i] == EditKind::deletion) continue;
    trace.source_to_output[i] = out;
    trace.output_to_source[out] = i;
    ++out;
  }

  return MutatedCopy{Sequence(x.id() + "_mut", std::move(symbols), x.alphabet_ptr()), std::move(trace)};
}

Sequence apply_edits(const Sequence& x, const EditTrace& trace) {
  auto symbols = replay(x.symbols(), trace.events);
  if (symbols.empty()) throw InvalidArgument("apply_edits: edits deleted the entire sequence");
  return Sequence(x.id() + "_mut", std::move(symbols), x.alphabet_ptr());
}

}  // namespace ctxprobe
