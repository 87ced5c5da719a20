#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <thread>

#include "fixtures.hpp"
#include "seqbelief/embed.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/io.hpp"
#include "seqbelief/records.hpp"

using namespace seqbelief;
namespace fs = std::filesystem;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seqbelief_embed_" + name);
  fs::remove_all(p);
  return p;
}

/// Local summariser stub. `failures` requests fail with HTTP 503 before it
/// starts answering with `summary`.
class StubServer {
 public:
  StubServer(std::string summary, int failures) : summary_(std::move(summary)), failures_(failures) {
    server_.Post("/summarize", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_body_ = req.body;
      if (failures_ > 0) {
        --failures_;
        res.status = 503;
        return;
      }
      res.set_content(nlohmann::json{{"summary", summary_}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/summarize"; }
  int hits() const { return hits_; }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::string summary_;
  std::atomic<int> failures_;
  std::atomic<int> hits_{0};
  std::string last_body_;
  int port_ = 0;
  std::thread thread_;
};

EmbedderConfig remote_config(const std::string& url) {
  EmbedderConfig cfg;
  cfg.mode = EmbedMode::remote;
  cfg.d_emb = 16;
  cfg.remote_endpoint = url;
  cfg.request_timeout_ms = 2000;
  cfg.retry_backoff_ms = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("mock_embed") {
  TEST_CASE("same text gives bit-identical vectors") {
    CHECK(mock_embed("gross margin is improving", 32) == mock_embed("gross margin is improving", 32));
  }

  TEST_CASE("nonempty text has unit norm") {
    for (const char* text : {"a", "market share", "Revenue grew 40% year over year.", "über ñ"}) {
      for (std::size_t d : {8u, 16u, 768u}) {
        const Tensor v = mock_embed(text, d);
        CHECK(v.size() == d);
        CHECK(std::abs(std::sqrt(dot(v, v)) - 1.0) < 1e-9);
      }
    }
  }

  TEST_CASE("distinct phrases are not near-parallel") {
    const Tensor a = mock_embed("market share", 768);
    const Tensor b = mock_embed("regulatory risk", 768);
    CHECK(dot(a, b) < 0.99);
  }

  TEST_CASE("text without tokens maps to the first basis vector") {
    for (const char* text : {"", "   ", "?!-"}) {
      const Tensor v = mock_embed(text, 8);
      CHECK(v[0] == 1.0);
      for (std::size_t i = 1; i < 8; ++i) CHECK(v[i] == 0.0);
    }
  }

  TEST_CASE("tokenisation ignores case and punctuation") {
    CHECK(mock_embed("Market, SHARE!", 16) == mock_embed("market share", 16));
  }

  TEST_CASE("d_emb below 8 is rejected") { CHECK_THROWS_AS(mock_embed("x", 7), InvalidInput); }
}

TEST_SUITE("embedder") {
  TEST_CASE("config validation") {
    EmbedderConfig cfg;
    cfg.d_emb = 4;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg.d_emb = 8;
    cfg.mode = EmbedMode::remote;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg.remote_endpoint = "https://example.com/x";
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg.remote_endpoint = "http://localhost:9/x";
    CHECK_NOTHROW(cfg.validate());
  }

  TEST_CASE("prompt carries the summarisation instruction with the word limit") {
    EmbedderConfig cfg;
    const std::string p = cfg.prompt();
    CHECK(p.rfind("Assume you are an investment analysis expert.", 0) == 0);
    CHECK(p.find("no more than 200 words") != std::string::npos);
    CHECK(p.find("Relationships Between Factors") != std::string::npos);
    cfg.max_summary_words = 50;
    CHECK(cfg.prompt().find("no more than 50 words") != std::string::npos);
  }

  TEST_CASE("present embeddings pass through unchanged") {
    Rng rng(3);
    Exchange x = fixtures::embedded_exchange(8, rng);
    x.question_text = "ignored";
    Embedder emb(EmbedderConfig{});
    const auto [q, a] = emb.llm_extract(x, 0);
    CHECK(q == *x.q_emb);
    CHECK(a == *x.a_emb);
  }

  TEST_CASE("mock mode equals mock_embed") {
    EmbedderConfig cfg;
    cfg.d_emb = 32;
    Embedder emb(cfg);
    const auto [q, a] = emb.llm_extract(fixtures::text_exchange("How big is the market?", "Large."), 0);
    CHECK(q == mock_embed("How big is the market?", 32));
    CHECK(a == mock_embed("Large.", 32));
  }

  TEST_CASE("missing text and embedding is rejected") {
    Embedder emb(EmbedderConfig{});
    Exchange x;
    x.question_text = "q";
    CHECK_THROWS_AS(emb.llm_extract(x, 4), InvalidInput);
  }

  TEST_CASE("cache hit, corruption and byte-identical ingest") {
    const fs::path dir = fresh_dir("cache");
    const fs::path raw = fs::path(SEQBELIEF_FIXTURES) / "raw_text_record.jsonl";
    EmbedderConfig cfg;
    cfg.d_emb = 16;

    auto run = [&](std::optional<fs::path> cache) {
      cfg.cache_dir = cache;
      auto recs = parse_dataset(raw);
      Embedder(cfg).ingest(recs);
      return serialize_dataset(recs);
    };
    const std::string plain = run(std::nullopt);
    const std::string cold = run(dir);
    CHECK(cold == plain);
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) > 0);
    const std::string warm = run(dir);
    CHECK(warm == plain);

    for (const auto& entry : fs::directory_iterator(dir)) write_file_atomic(entry.path(), "{broken");
    CHECK(run(dir) == plain);
    for (const auto& entry : fs::directory_iterator(dir)) {
      CHECK(read_file(entry.path()).find("embedding") != std::string::npos);
    }
  }

  TEST_CASE("ingest rejects mismatched existing width") {
    auto recs = std::vector<CompanyRecord>{fixtures::company("w", 1, {1}, 8, 1)};
    EmbedderConfig cfg;
    cfg.d_emb = 16;
    CHECK_THROWS_AS(Embedder(cfg).ingest(recs), InvalidInput);
  }
}

TEST_SUITE("remote embedder") {
  TEST_CASE("stub summary is embedded with the mock encoder") {
    StubServer stub("fixed summary text", 0);
    Embedder emb(remote_config(stub.url()));
    const auto [q, a] = emb.llm_extract(fixtures::text_exchange("question?", "answer."), 0);
    CHECK(q == mock_embed("fixed summary text", 16));
    CHECK(a == mock_embed("fixed summary text", 16));
    CHECK(stub.hits() == 2);
    const auto body = nlohmann::json::parse(stub.last_body());
    CHECK(body.at("text") == "answer.");
    CHECK(body.at("prompt").get<std::string>().rfind("Assume you are an investment analysis expert.", 0) == 0);
  }

  TEST_CASE("transient failures are retried") {
    StubServer stub("ok", 3);
    Embedder emb(remote_config(stub.url()));
    CHECK(emb.embed_text("anything", 0) == mock_embed("ok", 16));
    CHECK(stub.hits() == 4);
  }

  TEST_CASE("persistent failure names the exchange") {
    StubServer stub("never", 100);
    Embedder emb(remote_config(stub.url()));
    CHECK_THROWS_WITH_AS(emb.embed_text("anything", 17), doctest::Contains("exchange 17"), IoError);
    CHECK(stub.hits() == 4);
  }

  TEST_CASE("remote mode leaves already-embedded records alone") {
    StubServer stub("unused", 0);
    auto recs = std::vector<CompanyRecord>{fixtures::company("e", 1, {2, 1}, 16, 9)};
    const auto before = serialize_dataset(recs);
    Embedder(remote_config(stub.url())).ingest(recs);
    CHECK(serialize_dataset(recs) == before);
    CHECK(stub.hits() == 0);
  }
}
