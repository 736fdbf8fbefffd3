#include "ctxprobe/seqcore/sequence.hpp"

#include <algorithm>
#include <cctype>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

void Span::validate(std::size_t sequence_length) const {
  if (!(start < end && end <= sequence_length))
    throw InvalidArgument("span [" + std::to_string(start) + "," + std::to_string(end) +
                          ") invalid for length " + std::to_string(sequence_length));
}

Sequence::Sequence(std::string id, std::vector<Symbol> symbols, AlphabetPtr alphabet)
    : id_(std::move(id)), symbols_(std::move(symbols)), alphabet_(std::move(alphabet)) {
  if (!alphabet_) throw InvalidArgument("sequence without alphabet");
  if (symbols_.empty()) throw InvalidArgument("sequence '" + id_ + "' is empty");
  for (Symbol s : symbols_)
    if (s >= alphabet_->size()) throw InvalidArgument("symbol index out of alphabet range in '" + id_ + "'");
}

Sequence Sequence::from_string(std::string id, std::string_view text, AlphabetPtr alphabet) {
  std::vector<Symbol> symbols;
  symbols.reserve(text.size());
  for (char c : text) {
    auto s = alphabet->index_of(c);
    if (!s) s = alphabet->index_of(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (!s) throw InvalidArgument(std::string("unknown symbol '") + c + "' in sequence '" + id + "'");
    symbols.push_back(*s);
  }
  return Sequence(std::move(id), std::move(symbols), std::move(alphabet));
}

std::string Sequence::to_string() const {
  std::string out;
  out.reserve(symbols_.size());
  for (Symbol s : symbols_) out.push_back(alphabet_->symbol(s));
  return out;
}

Sequence Sequence::slice(Span span) const {
  span.validate(size());
  return Sequence(id_, std::vector<Symbol>(symbols_.begin() + static_cast<std::ptrdiff_t>(span.start),
                                           symbols_.begin() + static_cast<std::ptrdiff_t>(span.end)),
                  alphabet_);
}

Sequence concat(const Sequence& a, const Sequence& b, std::string id) {
  if (!(a.alphabet() == b.alphabet())) throw InvalidArgument("cannot concatenate sequences over different alphabets");
  std::vector<Symbol> out(a.symbols().begin(), a.symbols().end());
  out.insert(out.end(), b.symbols().begin(), b.symbols().end());
  return Sequence(id.empty() ? a.id() : std::move(id), std::move(out), a.alphabet_ptr());
}

std::size_t hamming(const Sequence& a, const Sequence& b) {
  if (a.size() != b.size()) throw InvalidArgument("hamming distance needs equal lengths");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

std::vector<std::size_t> find_all(std::span<const Symbol> haystack, std::span<const Symbol> needle) {
  std::vector<std::size_t> hits;
  if (needle.empty() || needle.size() > haystack.size()) return hits;
  auto it = haystack.begin();
  while (true) {
    it = std::search(it, haystack.end(), needle.begin(), needle.end());
    if (it == haystack.end()) break;
    hits.push_back(static_cast<std::size_t>(it - haystack.begin()));
    ++it;
  }
  return hits;
}

}  // namespace ctxprobe
