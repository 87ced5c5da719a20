#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqbelief/tensor.hpp"

namespace seqbelief {

/// Calendar date held as days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static Date parse(std::string_view iso);  // "YYYY-MM-DD"; throws InvalidInput
  static Date from_ymd(int year, unsigned month, unsigned day);
  std::string iso() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

enum class ExpertType { Competitor, Customer, FormerExec, IndustryCons, Partner };

inline constexpr std::array<ExpertType, 5> kExpertTypes = {ExpertType::Competitor, ExpertType::Customer,
                                                           ExpertType::FormerExec, ExpertType::IndustryCons,
                                                           ExpertType::Partner};

std::string_view to_string(ExpertType type);
std::optional<ExpertType> parse_expert_type(std::string_view name);

/// One question/answer pair. Text, embedding, or both may be present.
struct Exchange {
  std::optional<std::string> question_text;
  std::optional<std::string> answer_text;
  std::optional<Tensor> q_emb;
  std::optional<Tensor> a_emb;

  bool embedded() const noexcept { return q_emb.has_value() && a_emb.has_value(); }
  friend bool operator==(const Exchange&, const Exchange&) = default;
};

struct Call {
  std::string call_id;
  Date date;
  ExpertType expert_type = ExpertType::Customer;
  std::vector<Exchange> exchanges;

  friend bool operator==(const Call&, const Call&) = default;
};

inline constexpr std::size_t kCallHistoryMonths = 24;

/// Structured company covariates in raw units. Categorical fields stay as
/// strings; the scaler turns them into one-hot blocks.
struct FeatureVector {
  double age_months = 0;
  double founders_count = 0;
  double rounds = 0;
  double raised_funding_musd = 0;
  double investor_count = 0;
  double active_products = 0;
  double it_spend_musd = 0;
  std::array<double, kCallHistoryMonths> calls_last_24m{};
  std::string hq;
  std::string trademark_class;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct CompanyRecord {
  std::string company_id;
  int label = 0;
  Date outcome_date;
  FeatureVector features;
  std::vector<Call> calls;

  /// Embedding width shared by every present embedding, if any.
  std::optional<std::size_t> embedding_dim() const;
  bool fully_embedded() const;

  friend bool operator==(const CompanyRecord&, const CompanyRecord&) = default;
};

/// Check every record invariant; throws ValidationError naming the company and field.
void validate_record(const CompanyRecord& record, std::size_t line = 0);

CompanyRecord parse_record(std::string_view json_line, std::size_t line = 0);
std::string serialize_record(const CompanyRecord& record);

/// Parse a JSONL dataset. Blank lines are skipped; errors carry the line number.
std::vector<CompanyRecord> parse_dataset(const std::filesystem::path& path);
std::vector<CompanyRecord> parse_dataset_text(std::string_view text);
std::string serialize_dataset(std::span<const CompanyRecord> records);
void write_dataset(const std::filesystem::path& path, std::span<const CompanyRecord> records);

}  // namespace seqbelief
