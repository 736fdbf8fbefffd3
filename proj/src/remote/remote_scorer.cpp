#include "ctxprobe/remote/remote_scorer.hpp"

#include <openssl/evp.h>

#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "ctxprobe/error.hpp"
#include "ctxprobe/probes/parallel.hpp"

namespace ctxprobe {

// Caps outstanding requests across every thread using this scorer.
struct RemoteScorer::Gate {
  explicit Gate(std::size_t limit) : free(limit) {}
  void acquire() {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return free > 0; });
    --free;
  }
  void release() {
    {
      std::lock_guard lock(mutex);
      ++free;
    }
    cv.notify_one();
  }
  std::mutex mutex;
  std::condition_variable cv;
  std::size_t free;
};

namespace {

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

std::filesystem::path cache_path(const std::filesystem::path& root, const std::string& key) {
  return root / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_atomic(const std::filesystem::path& p, const std::string& body) {
  std::filesystem::create_directories(p.parent_path());
  std::random_device rd;
  const auto tmp = p.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write cache file " + tmp);
    out << body;
    if (!out.flush()) throw Error("cannot write cache file " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

// Structured 4xx bodies look like {"error": {"code": ..., "message": ...}}.
[[noreturn]] void raise_client_error(int status, const std::string& body) {
  std::string code;
  std::string message = body.substr(0, 200);
  try {
    const auto j = nlohmann::json::parse(body);
    if (j.contains("error")) {
      code = j["error"].value("code", std::string());
      message = j["error"].value("message", message);
    }
  } catch (const nlohmann::json::exception&) {
  }
  if (code == "exceeds_context") throw ContextError("exceeds context: " + message);
  if (code == "version_skew") throw ProtocolError("protocol version skew: " + message);
  if (code == "capability") throw CapabilityError(message);
  throw ProtocolError("server rejected request (HTTP " + std::to_string(status) + "): " + message);
}

httplib::Client make_client(const RemoteConfig& c) {
  httplib::Client cli(c.endpoint);
  cli.set_connection_timeout(std::chrono::seconds(10));
  cli.set_read_timeout(c.timeout);
  cli.set_write_timeout(c.timeout);
  if (!c.auth_token.empty()) cli.set_bearer_token_auth(c.auth_token);
  return cli;
}

}  // namespace

void RemoteConfig::validate() const {
  if (endpoint.empty()) throw InvalidArgument("remote scorer needs an endpoint");
  if (endpoint.rfind("http://", 0) != 0) throw InvalidArgument("endpoint must start with http://");
  if (model.empty()) throw InvalidArgument("remote scorer needs a model id");
  if (!alphabet) throw InvalidArgument("remote scorer needs an alphabet");
  if (max_in_flight == 0) throw InvalidArgument("max_in_flight must be positive");
}

std::string cache_key(const std::string& model, const ScorerQuery& query) {
  const nlohmann::json j{{"model", model},
                         {"tokens", query.sequence.to_string()},
                         {"masked_positions", query.masked_positions},
                         {"wants", {{"logprobs", query.wants.distributions}, {"embeddings", query.wants.embeddings}}}};
  return sha256_hex(j.dump());
}

RemoteScorer::RemoteScorer(RemoteConfig config) : config_(std::move(config)) {
  if (config_.auth_token.empty())
    if (const char* t = std::getenv(kAuthTokenVariable)) config_.auth_token = t;
  config_.validate();
  gate_ = std::make_shared<Gate>(config_.max_in_flight);
}

HealthInfo RemoteScorer::health(const RemoteConfig& config) {
  RemoteConfig c = config;
  if (c.auth_token.empty())
    if (const char* t = std::getenv(kAuthTokenVariable)) c.auth_token = t;
  c.validate();
  auto cli = make_client(c);
  auto res = cli.Get("/v1/health");
  if (!res) throw TransportError("health check failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError("health check returned HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    HealthInfo h;
    h.protocol_version = j.at("protocol_version").get<int>();
    h.model = j.value("model", std::string());
    h.alphabet = j.value("alphabet", std::string());
    const auto& cap = j.at("capabilities");
    h.capabilities.distributions = cap.value("masked", true);
    h.capabilities.causal = cap.value("causal", false);
    h.capabilities.embeddings = cap.value("embeddings", false);
    h.capabilities.embedding_width = cap.value("embedding_width", std::size_t{0});
    if (cap.contains("max_context") && !cap["max_context"].is_null())
      h.capabilities.context_limit = cap["max_context"].get<std::size_t>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed health response: ") + e.what());
  }
}

std::unique_ptr<RemoteScorer> RemoteScorer::connect(RemoteConfig config) {
  const HealthInfo h = health(config);
  if (h.protocol_version != kWireProtocolVersion)
    throw ProtocolError("protocol version skew: server speaks " + std::to_string(h.protocol_version));
  if (!h.alphabet.empty() && h.alphabet != config.alphabet->symbols())
    throw ProtocolError("server alphabet '" + h.alphabet + "' differs from the declared '" + config.alphabet->symbols() + "'");
  config.capabilities = h.capabilities;
  return std::make_unique<RemoteScorer>(std::move(config));
}

std::string RemoteScorer::post(const std::string& path, const std::string& body) const {
  auto cli = make_client(config_);
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
    gate_->acquire();
    ++network_calls_;
    auto res = cli.Post(path, body, "application/json");
    gate_->release();
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    if (res->status >= 400 && res->status < 500 && res->status != 429) raise_client_error(res->status, res->body);
    last_error = "HTTP " + std::to_string(res->status);
  }
  throw TransportError("request to " + config_.endpoint + path + " failed after " + std::to_string(config_.retries + 1) +
                       " attempts: " + last_error);
}

std::string RemoteScorer::fetch(const std::string& path, const WireRequest& request, const std::string& key) const {
  if (!config_.cache_dir.empty()) {
    if (auto hit = read_file(cache_path(config_.cache_dir, key))) {
      ++cache_hits_;
      return *hit;
    }
  }
  std::string body = post(path, request.to_json().dump());
  if (!config_.cache_dir.empty()) {
    // Only well-formed payloads are cached.
    try {
      WireResponse::from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
    }
    write_atomic(cache_path(config_.cache_dir, key), body);
  }
  return body;
}

ScorerResponse RemoteScorer::score(const ScorerQuery& query) const {
  query.validate();
  check_query_fits(*this, query);
  if (!(query.sequence.alphabet() == *config_.alphabet)) throw InvalidArgument("query alphabet differs from the declared alphabet");
  const auto request = make_wire_request(config_.model, query, "b" + std::to_string(batch_counter_++));
  const std::string body = fetch("/v1/score", request, cache_key(config_.model, query));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("response is not valid JSON: ") + e.what() + " in " + body.substr(0, 200));
  }
  return decode_wire_response(WireResponse::from_json(j), query, config_.alphabet->size(),
                              config_.capabilities.embedding_width);
}

std::vector<ScorerResponse> RemoteScorer::score_batch(std::span<const ScorerQuery> queries) const {
  std::vector<ScorerResponse> out(queries.size());
  parallel_for(queries.size(), config_.max_in_flight, [&](std::size_t k) { out[k] = score(queries[k]); });
  return out;
}

std::vector<double> RemoteScorer::causal_log_probs(const Sequence& x) const {
  if (!config_.capabilities.causal) throw CapabilityError("remote model '" + config_.model + "' is not causal");
  ScorerQuery q{x, {}, {}};
  const auto request = make_wire_request(config_.model, q, "c" + std::to_string(batch_counter_++));
  const std::string body = fetch("/v1/causal", request, "causal-" + cache_key(config_.model, q));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
  }
  const auto resp = decode_wire_response(WireResponse::from_json(j), q, config_.alphabet->size(), 0);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(resp.distributions.at_position(i)[x[i]]);
  return out;
}

}  // namespace ctxprobe
