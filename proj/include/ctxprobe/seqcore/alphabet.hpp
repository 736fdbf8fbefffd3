#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxprobe {

using Symbol = std::uint8_t;

enum class AlphabetKind { protein, rna, dna, synthetic };

std::string_view to_string(AlphabetKind kind);

// Ordered set of single-character symbols. Nucleotide alphabets carry a
// complement pairing; the pairing is an involution over all symbols.
class Alphabet {
 public:
  Alphabet(std::string symbols, AlphabetKind kind,
           std::optional<std::vector<Symbol>> complement = std::nullopt);

  static Alphabet protein();  // ACDEFGHIKLMNPQRSTVWY
  static Alphabet rna();      // ACGU
  static Alphabet dna();      // ACGT
  static Alphabet synthetic(std::string symbols);
  // "protein", "rna", "dna"; anything else is treated as a literal symbol list.
  static Alphabet from_name(std::string_view name);

  [[nodiscard]] std::size_t size() const noexcept { return symbols_.size(); }
  [[nodiscard]] AlphabetKind kind() const noexcept { return kind_; }
  [[nodiscard]] const std::string& symbols() const noexcept { return symbols_; }
  [[nodiscard]] char symbol(Symbol s) const { return symbols_.at(s); }
  [[nodiscard]] std::optional<Symbol> index_of(char c) const noexcept;
  [[nodiscard]] Symbol index_or_throw(char c) const;

  [[nodiscard]] bool has_complement() const noexcept { return complement_.has_value(); }
  [[nodiscard]] Symbol complement(Symbol s) const;
  [[nodiscard]] std::string name() const;

  bool operator==(const Alphabet& other) const noexcept {
    return symbols_ == other.symbols_ && kind_ == other.kind_ && complement_ == other.complement_;
  }

 private:
  std::string symbols_;
  AlphabetKind kind_;
  std::optional<std::vector<Symbol>> complement_;
  std::array<std::int16_t, 256> lookup_{};
};

using AlphabetPtr = std::shared_ptr<const Alphabet>;

inline AlphabetPtr make_alphabet(Alphabet a) { return std::make_shared<const Alphabet>(std::move(a)); }

}  // namespace ctxprobe
