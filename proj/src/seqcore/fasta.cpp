#include "ctxprobe/seqcore/fasta.hpp"

#include <zlib.h>

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ctxprobe/error.hpp"

namespace ctxprobe {
namespace {

std::string read_maybe_gzipped(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (!file) throw InvalidArgument("cannot open FASTA file " + path.string());
  std::string text;
  char buffer[1 << 16];
  int n;
  while ((n = gzread(file, buffer, sizeof(buffer))) > 0) text.append(buffer, static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(file, &err);
  std::string error_text = (n < 0 && msg) ? msg : "";
  gzclose(file);
  if (n < 0) throw InvalidArgument("error reading " + path.string() + ": " + error_text);
  return text;
}

}  // namespace

FastaCorpus parse_fasta_text(const std::string& text, const AlphabetPtr& alphabet, const FastaOptions& options) {
  FastaCorpus corpus;
  std::unordered_set<std::string> seen;
  std::string id;
  std::string residues;
  bool in_record = false;
  std::size_t records = 0;

  auto flush = [&] {
    if (!in_record) return;
    ++records;
    if (!seen.insert(id).second) throw InvalidArgument("duplicate FASTA id '" + id + "'");
    if (residues.empty()) {
      corpus.rejected.push_back({id, "empty record"});
      return;
    }
    std::vector<Symbol> symbols;
    symbols.reserve(residues.size());
    for (char c : residues) {
      auto s = alphabet->index_of(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (!s) {
        corpus.rejected.push_back({id, std::string("unknown symbol '") + c + "'"});
        return;
      }
      symbols.push_back(*s);
    }
    if ((options.min_length && symbols.size() < *options.min_length) ||
        (options.max_length && symbols.size() > *options.max_length)) {
      ++corpus.filtered_by_length;
      return;
    }
    corpus.sequences.emplace_back(id, std::move(symbols), alphabet);
  };

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == ';') continue;
    if (line[0] == '>') {
      flush();
      in_record = true;
      residues.clear();
      auto end = line.find_first_of(" \t", 1);
      id = line.substr(1, end == std::string::npos ? std::string::npos : end - 1);
      if (id.empty()) id = "record" + std::to_string(records + 1);
      continue;
    }
    if (!in_record) throw InvalidArgument("FASTA text before first header");
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) residues.push_back(c);
  }
  flush();
  if (records == 0) throw InvalidArgument("FASTA input contains no records");
  return corpus;
}

FastaCorpus parse_fasta(const std::filesystem::path& path, const AlphabetPtr& alphabet, const FastaOptions& options) {
  return parse_fasta_text(read_maybe_gzipped(path), alphabet, options);
}

void write_fasta(const std::filesystem::path& path, const std::vector<Sequence>& sequences) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  for (const auto& s : sequences) {
    out << '>' << s.id() << '\n';
    const std::string text = s.to_string();
    for (std::size_t i = 0; i < text.size(); i += 60) out << text.substr(i, 60) << '\n';
  }
}

}  // namespace ctxprobe
