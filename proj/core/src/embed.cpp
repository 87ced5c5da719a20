#include "seqbelief/embed.hpp"

#include <httplib.h>

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <regex>
#include <thread>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/io.hpp"
#include "seqbelief/rng.hpp"

namespace seqbelief {

const std::string_view kSummaryPromptTemplate =
    "Assume you are an investment analysis expert. Please summarize the given private company's expert call "
    "content from the following perspectives in no more than {max_words} words: Startup Characteristics "
    "(Product, Financial Health, Founding Team, Leadership, Intellectual Property); Market and Industry Dynamics "
    "(Market Size, Competitive Landscape, Economic and Regulatory Environment); Investor Characteristics (VC "
    "Expertise, Investment Strategy, Governance Role); Buyer Characteristics (Strategic Fit, Buyer's reputation "
    "for successful cultural and operational integration); Relationships Between Factors. If there is no "
    "description associated with the above feature, output the None value.";

namespace {

constexpr std::uint64_t kMockProjectionSeed = 0x5eb1e7e3b3dd1e55ULL;

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw InvalidInput("remote endpoint must look like http://host[:port][/path], got '" + url + "'");
  }
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void EmbedderConfig::validate() const {
  if (d_emb < 8) throw InvalidInput("d_emb must be >= 8, got " + std::to_string(d_emb));
  if (max_summary_words < 1) throw InvalidInput("max_summary_words must be >= 1");
  if (request_timeout_ms < 1) throw InvalidInput("request_timeout_ms must be >= 1");
  if (retry_backoff_ms < 0) throw InvalidInput("retry_backoff_ms must be >= 0");
  if (mode == EmbedMode::remote) {
    if (!remote_endpoint || remote_endpoint->empty()) throw InvalidInput("remote embedder needs an endpoint");
    parse_endpoint(*remote_endpoint);
  }
}

std::string EmbedderConfig::prompt() const {
  std::string out = prompt_template;
  const std::string key = "{max_words}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos)) {
    const auto n = std::to_string(max_summary_words);
    out.replace(pos, key.size(), n);
    pos += n.size();
  }
  return out;
}

Tensor mock_embed(std::string_view text, std::size_t d_emb) {
  if (d_emb < 8) throw InvalidInput("d_emb must be >= 8, got " + std::to_string(d_emb));
  std::vector<double> acc(d_emb, 0.0);
  bool any = false;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    Rng rng(derive_seed(kMockProjectionSeed, fnv1a(token)));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : acc) v += dist(rng);
    token.clear();
    any = true;
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      token.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (!any || norm == 0.0) {
    Tensor e0 = Tensor::zeros(d_emb);
    e0[0] = 1.0;
    return e0;
  }
  for (double& v : acc) v /= norm;
  return Tensor::vector(std::move(acc));
}

Embedder::Embedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.cache_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*cfg_.cache_dir, ec);
    if (ec) throw IoError("cannot create embedding cache '" + cfg_.cache_dir->string() + "': " + ec.message());
  }
}

std::string Embedder::cache_key(std::string_view text) const {
  std::uint64_t h = fnv1a(cfg_.mode == EmbedMode::mock ? "mock" : "remote");
  h = fnv1a(std::to_string(cfg_.d_emb), h);
  if (cfg_.mode == EmbedMode::remote) {
    h = fnv1a(*cfg_.remote_endpoint, h);
    h = fnv1a(cfg_.prompt(), h);
  }
  h = fnv1a("\x1f", h);
  return hex64(fnv1a(text, h)) + hex64(fnv1a(text, mix_seed(h)));
}

std::optional<Tensor> Embedder::cache_lookup(const std::string& key) const {
  if (!cfg_.cache_dir) return std::nullopt;
  const auto path = *cfg_.cache_dir / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto j = codec::json::parse(read_file(path));
    if (j.at("key").get<std::string>() != key) return std::nullopt;
    Tensor t = codec::tensor_from_values(j.at("embedding"), "cached embedding");
    if (t.size() != cfg_.d_emb || !t.all_finite()) return std::nullopt;
    return t;
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry: recompute and overwrite
  }
}

void Embedder::cache_store(const std::string& key, const Tensor& value) {
  if (!cfg_.cache_dir) return;
  const codec::json j = {{"key", key}, {"embedding", codec::tensor_values(value)}};
  std::lock_guard lock(cache_write_);
  write_file_atomic(*cfg_.cache_dir / (key + ".json"), j.dump());
}

std::string Embedder::summarize(std::string_view text, std::size_t exchange_index) const {
  const auto ep = parse_endpoint(*cfg_.remote_endpoint);
  httplib::Client client(ep.base);
  const auto timeout = std::chrono::milliseconds(cfg_.request_timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  const std::string body = codec::json{{"prompt", cfg_.prompt()}, {"text", std::string(text)}}.dump();

  constexpr int kMaxRetries = 3;
  std::string last_error;
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.retry_backoff_ms) * (1 << (attempt - 1)));
    }
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return codec::json::parse(res->body).at("summary").get<std::string>();
    } catch (const std::exception& e) {
      throw IoError("exchange " + std::to_string(exchange_index) + ": malformed summarizer response: " + e.what());
    }
  }
  throw IoError("exchange " + std::to_string(exchange_index) + ": summarizer failed after " +
                std::to_string(kMaxRetries) + " retries: " + last_error);
}

Tensor Embedder::embed_text(std::string_view text, std::size_t exchange_index) {
  const auto key = cache_key(text);
  if (auto hit = cache_lookup(key)) return std::move(*hit);
  Tensor out = cfg_.mode == EmbedMode::mock ? mock_embed(text, cfg_.d_emb)
                                            : mock_embed(summarize(text, exchange_index), cfg_.d_emb);
  cache_store(key, out);
  return out;
}

std::pair<Tensor, Tensor> Embedder::llm_extract(const Exchange& x, std::size_t exchange_index) {
  auto side = [&](const std::optional<Tensor>& emb, const std::optional<std::string>& text,
                  const char* which) -> Tensor {
    if (emb) return *emb;
    if (!text) {
      throw InvalidInput("exchange " + std::to_string(exchange_index) + " has neither " + which +
                         " text nor embedding");
    }
    return embed_text(*text, exchange_index);
  };
  Tensor q = side(x.q_emb, x.question_text, "question");
  Tensor a = side(x.a_emb, x.answer_text, "answer");
  return {std::move(q), std::move(a)};
}

void Embedder::ingest(std::span<CompanyRecord> records) {
  std::size_t index = 0;
  for (auto& r : records) {
    for (auto& c : r.calls) {
      for (auto& x : c.exchanges) {
        if (!x.embedded()) {
          auto [q, a] = llm_extract(x, index);
          x.q_emb = std::move(q);
          x.a_emb = std::move(a);
        }
        ++index;
      }
    }
    validate_record(r);
    if (auto d = r.embedding_dim(); d && *d != cfg_.d_emb) {
      throw InvalidInput("company '" + r.company_id + "' carries embeddings of width " + std::to_string(*d) +
                         " but the embedder produces " + std::to_string(cfg_.d_emb));
    }
  }
}

}  // namespace seqbelief
