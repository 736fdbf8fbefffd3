#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"

#include "ctxprobe/error.hpp"
#include "ctxprobe/probes/probes.hpp"
#include "ctxprobe/remote/remote_scorer.hpp"
#include "ctxprobe/scoring/metrics.hpp"
#include "ctxprobe/seqcore/generate.hpp"

namespace ctxprobe {
namespace {

AlphabetPtr protein() { return make_alphabet(Alphabet::protein()); }

// Loopback server speaking the wire protocol. The echo model puts all mass
// on the true symbol at every answered position.
class EchoServer {
 public:
  std::size_t max_context = 300;
  std::size_t width_override = 0;
  int version = kWireProtocolVersion;
  bool scramble_positions = false;
  bool bad_sum = false;
  bool causal = true;
  std::atomic<int> fail_next{0};
  std::atomic<int> requests{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> peak_in_flight{0};
  std::string last_auth;
  std::mutex mutex;

  EchoServer() {
    svr_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json j{{"protocol_version", version},
                       {"model", "echo"},
                       {"alphabet", protein()->symbols()},
                       {"capabilities",
                        {{"masked", true}, {"causal", causal}, {"embeddings", true}, {"embedding_width", 3}, {"max_context", max_context}}}};
      res.set_content(j.dump(), "application/json");
    });
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      const int now = ++in_flight;
      int peak = peak_in_flight.load();
      while (now > peak && !peak_in_flight.compare_exchange_weak(peak, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      answer(req, res);
      --in_flight;
    };
    svr_.Post("/v1/score", handler);
    svr_.Post("/v1/causal", handler);
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~EchoServer() {
    svr_.stop();
    thread_.join();
  }

  [[nodiscard]] RemoteConfig config() const {
    RemoteConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    c.model = "echo";
    c.alphabet = protein();
    c.backoff = std::chrono::milliseconds(1);
    return c;
  }

 private:
  void answer(const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(mutex);
      last_auth = req.get_header_value("Authorization");
    }
    if (fail_next > 0) {
      --fail_next;
      res.status = 503;
      return;
    }
    const auto wr = WireRequest::from_json(nlohmann::json::parse(req.body));
    if (wr.tokens.size() > max_context) {
      res.status = 413;
      res.set_content(R"({"error":{"code":"exceeds_context","message":"too long"}})", "application/json");
      return;
    }
    const auto a = protein();
    WireResponse out;
    out.protocol_version = version;
    out.model = {"echo", "0", "identity"};
    std::vector<std::size_t> pos = wr.masked_positions;
    if (pos.empty())
      for (std::size_t i = 0; i < wr.tokens.size(); ++i) pos.push_back(i);
    if (wr.want_logprobs) {
      for (std::size_t p : pos) {
        std::vector<double> row(width_override ? width_override : a->size(), -HUGE_VAL);
        row[a->index_or_throw(wr.tokens[p]) % row.size()] = bad_sum ? std::log(0.5) : 0.0;
        out.logprobs.push_back(row);
      }
      out.positions = pos;
      if (scramble_positions && pos.size() > 1) std::swap(out.positions[0], out.positions[1]);
    }
    if (wr.want_embeddings) {
      std::vector<std::vector<double>> e;
      for (std::size_t i = 0; i < wr.tokens.size(); ++i) e.push_back({double(i), double(a->index_or_throw(wr.tokens[i])), 1.0});
      out.embeddings = e;
    }
    res.set_content(out.to_json().dump(), "application/json");
  }

  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

TEST(Wire, RequestRoundTrip) {
  auto x = Sequence::from_string("s", "ACDW", protein());
  auto r = make_wire_request("m", ScorerQuery{x, {1, 3}, {true, true}}, "b7");
  const auto j = r.to_json();
  EXPECT_EQ(j["tokens"], "ACDW");
  EXPECT_EQ(j["masked_positions"], nlohmann::json({1, 3}));
  auto back = WireRequest::from_json(j);
  EXPECT_EQ(back.to_json(), j);
}

TEST(Wire, ResponseNullIsNegativeInfinity) {
  WireResponse r;
  r.positions = {0};
  r.logprobs = {{0.0, -HUGE_VAL}};
  const auto j = r.to_json();
  EXPECT_TRUE(j["logprobs"][0][1].is_null());
  auto back = WireResponse::from_json(j);
  EXPECT_TRUE(std::isinf(back.logprobs[0][1]));
  auto skew = j;
  skew["protocol_version"] = 2;
  EXPECT_THROW(WireResponse::from_json(skew), ProtocolError);
}

TEST(Wire, SchemaMatchesSerializedFields) {
  std::ifstream in(std::string(CTXPROBE_SOURCE_DIR) + "/schema/wire_protocol_v1.json");
  ASSERT_TRUE(in);
  const auto schema = nlohmann::json::parse(in);
  auto keys = [](const nlohmann::json& obj) {
    std::vector<std::string> k;
    for (auto it = obj.begin(); it != obj.end(); ++it) k.push_back(it.key());
    std::sort(k.begin(), k.end());
    return k;
  };
  auto required = [](const nlohmann::json& s) {
    auto v = s.at("required").get<std::vector<std::string>>();
    std::sort(v.begin(), v.end());
    return v;
  };
  auto x = Sequence::from_string("s", "AC", protein());
  EXPECT_EQ(keys(make_wire_request("m", ScorerQuery{x, {}, {}}).to_json()), required(schema["$defs"]["request"]));
  EXPECT_EQ(keys(schema["$defs"]["request"]["properties"]), required(schema["$defs"]["request"]));
  EXPECT_EQ(keys(WireResponse{}.to_json()), required(schema["$defs"]["response"]));
  EXPECT_EQ(schema["$defs"]["response"]["properties"]["protocol_version"]["const"], kWireProtocolVersion);
}

TEST(Wire, DecodeRenormalizesWithinTolerance) {
  auto x = Sequence::from_string("s", "AC", protein());
  ScorerQuery q{x, {1}, {}};
  WireResponse r;
  r.positions = {1};
  std::vector<double> row(20, std::log((1.0 + 5e-5) / 20));
  r.logprobs = {row};
  auto d = decode_wire_response(r, q, 20, 0);
  double s = 0.0;
  for (double v : d.distributions.at_position(1)) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  r.logprobs = {std::vector<double>(20, std::log(1.01 / 20))};
  EXPECT_THROW(decode_wire_response(r, q, 20, 0), ProtocolError);
  r.logprobs = {std::vector<double>(19, std::log(1.0 / 19))};
  EXPECT_THROW(decode_wire_response(r, q, 20, 0), ProtocolError);
}

TEST(Remote, EchoModelGivesPerplexityOne) {
  EchoServer server;
  auto scorer = RemoteScorer::connect(server.config());
  EXPECT_EQ(scorer->name(), "remote:echo");
  EXPECT_TRUE(scorer->capabilities().embeddings);
  EXPECT_EQ(scorer->capabilities().context_limit, 300u);
  auto x = random_sequence(40, protein(), 3);
  EXPECT_EQ(pseudo_perplexity(one_at_a_time_profile(*scorer, x), x), 1.0);
  EXPECT_EQ(pseudo_perplexity(ofs_profile(*scorer, x), x), 1.0);
  EXPECT_EQ(causal_perplexity(*scorer, x), 1.0);
}

TEST(Remote, OneRequestPerQueryAndInFlightLimit) {
  EchoServer server;
  auto cfg = server.config();
  cfg.max_in_flight = 4;
  auto scorer = RemoteScorer::connect(cfg);
  auto x = random_sequence(60, protein(), 5);
  const int before = server.requests;
  ProfileOptions opt;
  opt.batch_size = 64;
  auto prof = one_at_a_time_profile(*scorer, x, opt);
  EXPECT_EQ(server.requests - before, 60);
  EXPECT_LE(server.peak_in_flight.load(), 4);
  EXPECT_GE(server.peak_in_flight.load(), 2);
}

TEST(Remote, CacheServesRepeatsWithoutNetwork) {
  EchoServer server;
  auto cfg = server.config();
  cfg.cache_dir = fresh_dir("ctxprobe_cache_test");
  auto scorer = RemoteScorer::connect(cfg);
  auto x = random_sequence(30, protein(), 8);
  ScorerQuery q{x, {4, 9}, {true, true}};
  auto fresh = scorer->score(q);
  const auto calls = scorer->network_calls();
  auto cached = scorer->score(q);
  EXPECT_EQ(scorer->network_calls(), calls);
  EXPECT_EQ(scorer->cache_hits(), 1u);
  EXPECT_EQ(fresh.distributions, cached.distributions);
  EXPECT_EQ(*fresh.embeddings, *cached.embeddings);
  // A new scorer on the same directory resumes from disk.
  auto again = RemoteScorer::connect(cfg);
  auto resumed = again->score(q);
  EXPECT_EQ(again->network_calls(), 0u);
  EXPECT_EQ(resumed.distributions, fresh.distributions);
  EXPECT_NE(cache_key("echo", q), cache_key("other", q));
  EXPECT_NE(cache_key("echo", q), cache_key("echo", ScorerQuery{x, {4}, {true, true}}));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(cfg.cache_dir)) {
    files += e.is_regular_file();
    EXPECT_EQ(e.path().string().find(".tmp"), std::string::npos);
  }
  EXPECT_EQ(files, 1u);
  std::filesystem::remove_all(cfg.cache_dir);
}

TEST(Remote, ProtocolViolations) {
  EchoServer server;
  auto scorer = RemoteScorer::connect(server.config());
  auto x = random_sequence(20, protein(), 1);
  server.width_override = 19;
  EXPECT_THROW((void)scorer->score(ScorerQuery{x, {2}, {}}), ProtocolError);
  server.width_override = 0;
  server.scramble_positions = true;
  EXPECT_THROW((void)scorer->score(ScorerQuery{x, {2, 5}, {}}), ProtocolError);
  server.scramble_positions = false;
  server.bad_sum = true;
  EXPECT_THROW((void)scorer->score(ScorerQuery{x, {2}, {}}), ProtocolError);
  server.bad_sum = false;
  server.version = 2;
  EXPECT_THROW((void)scorer->score(ScorerQuery{x, {2}, {}}), ProtocolError);
  EXPECT_THROW(RemoteScorer::connect(server.config()), ProtocolError);
}

TEST(Remote, RetriesThenFails) {
  EchoServer server;
  auto scorer = RemoteScorer::connect(server.config());
  auto x = random_sequence(20, protein(), 1);
  server.fail_next = 2;
  const auto before = scorer->network_calls();
  EXPECT_NO_THROW((void)scorer->score(ScorerQuery{x, {2}, {}}));
  EXPECT_EQ(scorer->network_calls() - before, 3u);
  server.fail_next = 10;
  EXPECT_THROW((void)scorer->score(ScorerQuery{x, {2}, {}}), TransportError);
  EXPECT_EQ(server.fail_next.load(), 6);
}

TEST(Remote, UnreachableEndpointIsTransportError) {
  RemoteConfig c;
  c.endpoint = "http://127.0.0.1:1";
  c.model = "none";
  c.alphabet = protein();
  c.backoff = std::chrono::milliseconds(1);
  c.capabilities.context_limit = 100;
  RemoteScorer s(c);
  auto x = random_sequence(10, protein(), 1);
  EXPECT_THROW((void)s.score(ScorerQuery{x, {1}, {}}), TransportError);
  EXPECT_EQ(s.network_calls(), 4u);
  EXPECT_THROW(RemoteScorer::health(c), TransportError);
}

TEST(Remote, ContextOverflowBecomesFlaggedCells) {
  EchoServer server;
  server.max_context = 1000;
  auto cfg = server.config();
  cfg.capabilities.context_limit = std::nullopt;
  RemoteScorer scorer(cfg);  // capabilities not read from the server
  server.max_context = 120;
  auto x = random_sequence(150, protein(), 1);
  EXPECT_THROW((void)scorer.score(ScorerQuery{x, {1}, {}}), ContextError);
  MultiplicitySweepConfig sweep;
  sweep.unit_sizes = {50};
  sweep.multiplicities = {1, 2, 4};
  sweep.samples = 1;
  sweep.mode = ProfileMode::ofs;
  auto report = run_multiplicity_sweep(scorer, protein(), sweep);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_TRUE(report.rows[0].flag.empty());
  EXPECT_EQ(report.rows[0].metric_value("pppl"), 1.0);
  EXPECT_TRUE(report.rows[1].flag.empty());
  EXPECT_EQ(report.rows[2].flag, "exceeds context");
}

TEST(Remote, AuthTokenFromEnvironment) {
  EchoServer server;
  ::setenv(kAuthTokenVariable, "sekret", 1);
  auto scorer = RemoteScorer::connect(server.config());
  ::unsetenv(kAuthTokenVariable);
  auto x = random_sequence(10, protein(), 1);
  (void)scorer->score(ScorerQuery{x, {1}, {}});
  EXPECT_EQ(server.last_auth, "Bearer sekret");
}

TEST(Remote, CausalCapabilityRequired) {
  EchoServer server;
  server.causal = false;
  auto scorer = RemoteScorer::connect(server.config());
  auto x = random_sequence(10, protein(), 1);
  EXPECT_THROW(causal_perplexity(*scorer, x), CapabilityError);
}

}  // namespace
}  // namespace ctxprobe
