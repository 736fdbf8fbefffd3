#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

struct FastaOptions {
  // Inclusive length bounds; records outside are dropped and counted.
  std::optional<std::size_t> min_length;
  std::optional<std::size_t> max_length;

  // Corpus filter used for natural domains: keep 20..1000 residues.
  static FastaOptions domain_filter() { return FastaOptions{20, 1000}; }
};

struct RejectedRecord {
  std::string id;
  std::string reason;
};

struct FastaCorpus {
  std::vector<Sequence> sequences;
  std::vector<RejectedRecord> rejected;  // unknown symbols, empty records
  std::size_t filtered_by_length = 0;
};

// Reads plain or gzip-compressed FASTA. Ids are the first whitespace-delimited
// token of each header and must be unique within the file.
FastaCorpus parse_fasta(const std::filesystem::path& path, const AlphabetPtr& alphabet,
                        const FastaOptions& options = {});

// Same, from in-memory text.
FastaCorpus parse_fasta_text(const std::string& text, const AlphabetPtr& alphabet, const FastaOptions& options = {});

void write_fasta(const std::filesystem::path& path, const std::vector<Sequence>& sequences);

}  // namespace ctxprobe
