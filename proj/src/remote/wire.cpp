#include "ctxprobe/remote/wire.hpp"

#include <algorithm>
#include <cmath>

#include "ctxprobe/error.hpp"

namespace ctxprobe {
namespace {

nlohmann::json rows_to_json(const std::vector<std::vector<double>>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json jr = nlohmann::json::array();
    for (double v : r) {
      if (std::isinf(v) && v < 0) jr.push_back(nullptr);
      else jr.push_back(v);
    }
    out.push_back(std::move(jr));
  }
  return out;
}

std::vector<std::vector<double>> rows_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array()) throw ProtocolError(std::string(field) + " must be an array of rows");
  std::vector<std::vector<double>> out;
  for (const auto& jr : j) {
    if (!jr.is_array()) throw ProtocolError(std::string(field) + " rows must be arrays");
    std::vector<double> r;
    r.reserve(jr.size());
    for (const auto& v : jr) {
      if (v.is_null()) r.push_back(-HUGE_VAL);
      else if (v.is_number()) r.push_back(v.get<double>());
      else throw ProtocolError(std::string(field) + " entries must be numbers or null");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string excerpt(const nlohmann::json& j) {
  std::string s = j.dump();
  return s.size() > 200 ? s.substr(0, 200) + "..." : s;
}

}  // namespace

nlohmann::json WireRequest::to_json() const {
  return {{"protocol_version", protocol_version},
          {"model", model},
          {"tokens", tokens},
          {"masked_positions", masked_positions},
          {"wants", {{"logprobs", want_logprobs}, {"embeddings", want_embeddings}}},
          {"batch_id", batch_id}};
}

WireRequest WireRequest::from_json(const nlohmann::json& j) {
  try {
    WireRequest r;
    r.protocol_version = j.at("protocol_version").get<int>();
    r.model = j.at("model").get<std::string>();
    r.tokens = j.at("tokens").get<std::string>();
    r.masked_positions = j.at("masked_positions").get<std::vector<std::size_t>>();
    r.want_logprobs = j.at("wants").at("logprobs").get<bool>();
    r.want_embeddings = j.at("wants").at("embeddings").get<bool>();
    r.batch_id = j.value("batch_id", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  }
}

nlohmann::json WireResponse::to_json() const {
  nlohmann::json j{{"protocol_version", protocol_version},
                   {"positions", positions},
                   {"logprobs", rows_to_json(logprobs)},
                   {"model", {{"name", model.name}, {"revision", model.revision}, {"tokenizer_note", model.tokenizer_note}}},
                   {"renormalized", renormalized}};
  if (embeddings) j["embeddings"] = rows_to_json(*embeddings);
  return j;
}

WireResponse WireResponse::from_json(const nlohmann::json& j) {
  try {
    WireResponse r;
    r.protocol_version = j.at("protocol_version").get<int>();
    if (r.protocol_version != kWireProtocolVersion)
      throw ProtocolError("protocol version skew: server speaks " + std::to_string(r.protocol_version) + ", client " +
                          std::to_string(kWireProtocolVersion));
    r.positions = j.at("positions").get<std::vector<std::size_t>>();
    r.logprobs = rows_from_json(j.at("logprobs"), "logprobs");
    if (j.contains("embeddings") && !j["embeddings"].is_null()) r.embeddings = rows_from_json(j["embeddings"], "embeddings");
    if (j.contains("model")) {
      const auto& m = j["model"];
      r.model = {m.value("name", std::string()), m.value("revision", std::string()), m.value("tokenizer_note", std::string())};
    }
    r.renormalized = j.value("renormalized", false);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what() + " in " + excerpt(j));
  }
}

WireRequest make_wire_request(const std::string& model, const ScorerQuery& query, std::string batch_id) {
  WireRequest r;
  r.model = model;
  r.tokens = query.sequence.to_string();
  r.masked_positions = query.masked_positions;
  r.want_logprobs = query.wants.distributions;
  r.want_embeddings = query.wants.embeddings;
  r.batch_id = std::move(batch_id);
  return r;
}

ScorerResponse decode_wire_response(const WireResponse& response, const ScorerQuery& query, std::size_t alphabet_size,
                                    std::size_t embedding_width) {
  if (response.protocol_version != kWireProtocolVersion) throw ProtocolError("protocol version skew");
  ScorerResponse out{DistributionMatrix(alphabet_size), std::nullopt};
  if (query.wants.distributions) {
    const auto expected = query.covered_positions();
    if (response.positions != expected)
      throw ProtocolError("response positions do not echo the request (" + std::to_string(response.positions.size()) +
                          " rows for " + std::to_string(expected.size()) + " positions)");
    if (response.logprobs.size() != expected.size())
      throw ProtocolError("response has " + std::to_string(response.logprobs.size()) + " logprob rows for " +
                          std::to_string(expected.size()) + " positions");
    std::vector<double> p(alphabet_size);
    for (std::size_t k = 0; k < expected.size(); ++k) {
      const auto& row = response.logprobs[k];
      if (row.size() != alphabet_size)
        throw ProtocolError("logprob row of width " + std::to_string(row.size()) + " for an alphabet of " +
                            std::to_string(alphabet_size));
      double sum = 0.0;
      for (std::size_t c = 0; c < alphabet_size; ++c) {
        if (std::isnan(row[c]) || row[c] > 1e-9) throw ProtocolError("logprob entries must be finite log-probabilities");
        p[c] = std::exp(row[c]);
        sum += p[c];
      }
      if (std::abs(sum - 1.0) > kWireNormTolerance)
        throw ProtocolError("row for position " + std::to_string(expected[k]) + " sums to " + std::to_string(sum));
      for (double& v : p) v /= sum;
      out.distributions.append(expected[k], p);
    }
  }
  if (query.wants.embeddings) {
    if (!response.embeddings) throw ProtocolError("embeddings requested but not returned");
    const auto& rows = *response.embeddings;
    if (rows.size() != query.sequence.size()) throw ProtocolError("one embedding row per sequence position expected");
    EmbeddingMatrix e;
    e.width = rows.empty() ? embedding_width : rows.front().size();
    if (embedding_width && e.width != embedding_width) throw ProtocolError("embedding width differs from the declared width");
    for (const auto& r : rows) {
      if (r.size() != e.width) throw ProtocolError("ragged embedding rows");
      e.values.insert(e.values.end(), r.begin(), r.end());
    }
    out.embeddings = std::move(e);
  }
  return out;
}

}  // namespace ctxprobe
