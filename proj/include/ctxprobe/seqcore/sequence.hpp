#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/seqcore/alphabet.hpp"

namespace ctxprobe {

// Half-open window [start, end) over sequence positions.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t length() const noexcept { return end - start; }
  [[nodiscard]] bool contains(std::size_t i) const noexcept { return i >= start && i < end; }
  // Throws unless 0 <= start < end <= sequence_length.
  void validate(std::size_t sequence_length) const;

  bool operator==(const Span&) const = default;
};

class Sequence {
 public:
  Sequence(std::string id, std::vector<Symbol> symbols, AlphabetPtr alphabet);

  static Sequence from_string(std::string id, std::string_view text, AlphabetPtr alphabet);

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] std::size_t size() const noexcept { return symbols_.size(); }
  [[nodiscard]] Symbol operator[](std::size_t i) const noexcept { return symbols_[i]; }
  [[nodiscard]] std::span<const Symbol> symbols() const noexcept { return symbols_; }
  [[nodiscard]] const Alphabet& alphabet() const noexcept { return *alphabet_; }
  [[nodiscard]] const AlphabetPtr& alphabet_ptr() const noexcept { return alphabet_; }
  [[nodiscard]] std::string to_string() const;

  [[nodiscard]] Sequence with_id(std::string id) const { return Sequence(std::move(id), symbols_, alphabet_); }
  [[nodiscard]] Sequence slice(Span span) const;

  bool operator==(const Sequence& other) const {
    return symbols_ == other.symbols_ && *alphabet_ == *other.alphabet_;
  }

 private:
  std::string id_;
  std::vector<Symbol> symbols_;
  AlphabetPtr alphabet_;
};

// a followed by b; both must share an alphabet.
Sequence concat(const Sequence& a, const Sequence& b, std::string id = {});

std::size_t hamming(const Sequence& a, const Sequence& b);

// Offsets of every (possibly overlapping) occurrence of needle in haystack.
std::vector<std::size_t> find_all(std::span<const Symbol> haystack, std::span<const Symbol> needle);

}  // namespace ctxprobe
