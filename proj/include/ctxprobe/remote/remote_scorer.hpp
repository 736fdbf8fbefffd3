#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ctxprobe/remote/wire.hpp"
#include "ctxprobe/scoring/scorer.hpp"

namespace ctxprobe {

// Environment variable read for the bearer token when none is configured.
inline constexpr const char* kAuthTokenVariable = "CTXPROBE_AUTH_TOKEN";

struct RemoteConfig {
  // http://host:port
  std::string endpoint;
  std::string model;
  AlphabetPtr alphabet;
  std::string auth_token;
  // One file per response, keyed by content hash. Empty disables caching.
  std::filesystem::path cache_dir;
  std::size_t max_in_flight = 4;
  std::size_t retries = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::seconds timeout{120};
  // Filled from /v1/health by RemoteScorer::connect.
  Capabilities capabilities;

  void validate() const;
};

struct HealthInfo {
  int protocol_version = 0;
  std::string model;
  std::string alphabet;
  Capabilities capabilities;
};

// SHA-256 hex digest of (model id, sequence, masks, wants).
std::string cache_key(const std::string& model, const ScorerQuery& query);

class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(RemoteConfig config);
  // Reads /v1/health, checks the protocol version and alphabet, and takes
  // capabilities from the server.
  static std::unique_ptr<RemoteScorer> connect(RemoteConfig config);
  static HealthInfo health(const RemoteConfig& config);

  [[nodiscard]] std::string name() const override { return "remote:" + config_.model; }
  [[nodiscard]] Capabilities capabilities() const override { return config_.capabilities; }
  [[nodiscard]] ScorerResponse score(const ScorerQuery& query) const override;
  // One POST per query with at most max_in_flight outstanding.
  [[nodiscard]] std::vector<ScorerResponse> score_batch(std::span<const ScorerQuery> queries) const override;
  [[nodiscard]] std::vector<double> causal_log_probs(const Sequence& x) const override;

  [[nodiscard]] std::size_t network_calls() const noexcept { return network_calls_.load(); }
  [[nodiscard]] std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
  [[nodiscard]] const RemoteConfig& config() const noexcept { return config_; }

 private:
  // Response body for a request, from the cache or the server.
  std::string fetch(const std::string& path, const WireRequest& request, const std::string& key) const;
  std::string post(const std::string& path, const std::string& body) const;

  RemoteConfig config_;
  struct Gate;
  std::shared_ptr<Gate> gate_;
  mutable std::atomic<std::size_t> network_calls_{0};
  mutable std::atomic<std::size_t> cache_hits_{0};
  mutable std::atomic<std::size_t> batch_counter_{0};
};

}  // namespace ctxprobe
