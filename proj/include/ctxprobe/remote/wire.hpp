#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxprobe/scoring/scorer.hpp"

namespace ctxprobe {

inline constexpr int kWireProtocolVersion = 1;

// Body of POST /v1/score (and /v1/causal). `tokens` is the raw sequence as
// text; masked positions index into it.
struct WireRequest {
  int protocol_version = kWireProtocolVersion;
  std::string model;
  std::string tokens;
  std::vector<std::size_t> masked_positions;
  bool want_logprobs = true;
  bool want_embeddings = false;
  std::string batch_id;

  [[nodiscard]] nlohmann::json to_json() const;
  static WireRequest from_json(const nlohmann::json& j);
};

struct ModelMetadata {
  std::string name;
  std::string revision;
  std::string tokenizer_note;
};

// Natural-log probability rows over the declared alphabet order, one per
// entry of `positions`. A null entry on the wire stands for -infinity.
struct WireResponse {
  int protocol_version = kWireProtocolVersion;
  std::vector<std::size_t> positions;
  std::vector<std::vector<double>> logprobs;
  std::optional<std::vector<std::vector<double>>> embeddings;
  ModelMetadata model;
  // Set by the server when it renormalized over the canonical symbols.
  bool renormalized = false;

  [[nodiscard]] nlohmann::json to_json() const;
  static WireResponse from_json(const nlohmann::json& j);
};

WireRequest make_wire_request(const std::string& model, const ScorerQuery& query, std::string batch_id = {});

// Exp-sums of each row must lie within this distance of 1.
inline constexpr double kWireNormTolerance = 1e-4;

// Checks protocol version, position echo, row widths and normalization, then
// renormalizes rows exactly. Throws ProtocolError.
ScorerResponse decode_wire_response(const WireResponse& response, const ScorerQuery& query, std::size_t alphabet_size,
                                    std::size_t embedding_width);

}  // namespace ctxprobe
