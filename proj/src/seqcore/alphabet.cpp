#include "ctxprobe/seqcore/alphabet.hpp"

#include <cctype>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

std::string_view to_string(AlphabetKind kind) {
  switch (kind) {
    case AlphabetKind::protein: return "protein";
    case AlphabetKind::rna: return "rna";
    case AlphabetKind::dna: return "dna";
    case AlphabetKind::synthetic: return "synthetic";
  }
  return "synthetic";
}

Alphabet::Alphabet(std::string symbols, AlphabetKind kind, std::optional<std::vector<Symbol>> complement)
    : symbols_(std::move(symbols)), kind_(kind), complement_(std::move(complement)) {
  if (symbols_.size() < 2) throw InvalidArgument("alphabet needs at least two symbols");
  if (symbols_.size() > 255) throw InvalidArgument("alphabet too large");
  lookup_.fill(-1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto c = static_cast<unsigned char>(symbols_[i]);
    if (lookup_[c] >= 0) throw InvalidArgument(std::string("duplicate alphabet symbol '") + symbols_[i] + "'");
    lookup_[c] = static_cast<std::int16_t>(i);
  }
  const bool nucleotide = kind_ == AlphabetKind::rna || kind_ == AlphabetKind::dna;
  if (nucleotide != complement_.has_value())
    throw InvalidArgument("complement map must be present exactly for nucleotide alphabets");
  if (complement_) {
    if (complement_->size() != symbols_.size()) throw InvalidArgument("complement map must cover every symbol");
    for (std::size_t i = 0; i < complement_->size(); ++i) {
      Symbol c = (*complement_)[i];
      if (c >= symbols_.size() || (*complement_)[c] != i)
        throw InvalidArgument("complement map is not an involution");
    }
  }
}

Alphabet Alphabet::protein() { return Alphabet("ACDEFGHIKLMNPQRSTVWY", AlphabetKind::protein); }

Alphabet Alphabet::rna() { return Alphabet("ACGU", AlphabetKind::rna, std::vector<Symbol>{3, 2, 1, 0}); }

Alphabet Alphabet::dna() { return Alphabet("ACGT", AlphabetKind::dna, std::vector<Symbol>{3, 2, 1, 0}); }

Alphabet Alphabet::synthetic(std::string symbols) { return Alphabet(std::move(symbols), AlphabetKind::synthetic); }

Alphabet Alphabet::from_name(std::string_view name) {
  if (name == "protein") return protein();
  if (name == "rna") return rna();
  if (name == "dna") return dna();
  return synthetic(std::string(name));
}

std::optional<Symbol> Alphabet::index_of(char c) const noexcept {
  auto v = lookup_[static_cast<unsigned char>(c)];
  if (v < 0) return std::nullopt;
  return static_cast<Symbol>(v);
}

Symbol Alphabet::index_or_throw(char c) const {
  auto s = index_of(c);
  if (!s) throw InvalidArgument(std::string("symbol '") + c + "' not in alphabet " + name());
  return *s;
}

Symbol Alphabet::complement(Symbol s) const {
  if (!complement_) throw InvalidArgument("alphabet lacks complement");
  return complement_->at(s);
}

std::string Alphabet::name() const {
  if (kind_ == AlphabetKind::synthetic) return symbols_;
  return std::string(to_string(kind_));
}

}  // namespace ctxprobe
