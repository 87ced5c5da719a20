#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "seqbelief/records.hpp"
#include "seqbelief/tensor.hpp"

namespace seqbelief {

/// Summarisation instruction sent to the remote summariser. `{max_words}` is
/// replaced by EmbedderConfig::max_summary_words.
extern const std::string_view kSummaryPromptTemplate;

enum class EmbedMode { mock, remote };

struct EmbedderConfig {
  EmbedMode mode = EmbedMode::mock;
  std::size_t d_emb = 768;
  std::optional<std::string> remote_endpoint;  // http://host[:port][/path]
  std::string prompt_template{kSummaryPromptTemplate};
  int max_summary_words = 200;
  int request_timeout_ms = 30000;
  int retry_backoff_ms = 200;  // first retry delay; doubles on each retry
  std::optional<std::filesystem::path> cache_dir;

  void validate() const;
  std::string prompt() const;
};

/// Deterministic offline text encoder. Lower-cased alphanumeric tokens are
/// hashed, each hash seeds one Gaussian row of a virtual projection matrix,
/// the rows are summed and the result is L2-normalised. Text without tokens
/// maps to the first basis vector.
Tensor mock_embed(std::string_view text, std::size_t d_emb);

/// Text to embedding pairs. Embeddings already present on an exchange pass through
/// untouched; missing sides are computed from text.
class Embedder {
 public:
  explicit Embedder(EmbedderConfig cfg);

  const EmbedderConfig& config() const noexcept { return cfg_; }

  /// Embed one text under the configured mode, using the cache if set.
  Tensor embed_text(std::string_view text, std::size_t exchange_index);

  std::pair<Tensor, Tensor> llm_extract(const Exchange& exchange, std::size_t exchange_index);

  /// Fill every missing embedding in place.
  void ingest(std::span<CompanyRecord> records);

  /// POST {"prompt","text"} and return the "summary" field.
  std::string summarize(std::string_view text, std::size_t exchange_index) const;

 private:
  std::optional<Tensor> cache_lookup(const std::string& key) const;
  void cache_store(const std::string& key, const Tensor& value);
  std::string cache_key(std::string_view text) const;

  EmbedderConfig cfg_;
  std::mutex cache_write_;
};

}  // namespace seqbelief
