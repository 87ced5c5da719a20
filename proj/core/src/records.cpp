#include "seqbelief/records.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/io.hpp"

namespace seqbelief {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
std::int32_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(std::int32_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(int y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

[[noreturn]] void fail(std::size_t line, const std::string& company, const std::string& field,
                       const std::string& what) {
  std::string msg = "company '" + company + "'";
  if (!field.empty()) msg += ", field '" + field + "'";
  throw ValidationError(line, msg + ": " + what);
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) {
    throw InvalidInput("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) + "-" +
                       std::to_string(day));
  }
  return Date{days_from_civil(year, month, day)};
}

Date Date::parse(std::string_view iso) {
  auto bad = [&]() -> InvalidInput { return InvalidInput("expected a YYYY-MM-DD date, got '" + std::string(iso) + "'"); };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::string_view s, auto& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw bad();
  };
  num(iso.substr(0, 4), y);
  num(iso.substr(5, 2), m);
  num(iso.substr(8, 2), d);
  return from_ymd(y, m, d);
}

std::string Date::iso() const {
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
  return buf;
}

std::string_view to_string(ExpertType type) {
  switch (type) {
    case ExpertType::Competitor: return "Competitor";
    case ExpertType::Customer: return "Customer";
    case ExpertType::FormerExec: return "FormerExec";
    case ExpertType::IndustryCons: return "IndustryCons";
    case ExpertType::Partner: return "Partner";
  }
  return "Customer";
}

std::optional<ExpertType> parse_expert_type(std::string_view name) {
  for (auto t : kExpertTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::optional<std::size_t> CompanyRecord::embedding_dim() const {
  for (const auto& c : calls) {
    for (const auto& x : c.exchanges) {
      if (x.q_emb) return x.q_emb->size();
      if (x.a_emb) return x.a_emb->size();
    }
  }
  return std::nullopt;
}

bool CompanyRecord::fully_embedded() const {
  for (const auto& c : calls) {
    for (const auto& x : c.exchanges) {
      if (!x.embedded()) return false;
    }
  }
  return !calls.empty();
}

void validate_record(const CompanyRecord& r, std::size_t line) {
  const std::string& id = r.company_id;
  if (id.empty()) fail(line, id, "company_id", "must be non-empty");
  if (r.label != 0 && r.label != 1) fail(line, id, "label", "must be 0 or 1");

  const auto& f = r.features;
  const std::pair<const char*, double> scalars[] = {
      {"age_months", f.age_months},       {"founders_count", f.founders_count},
      {"rounds", f.rounds},               {"raised_funding_musd", f.raised_funding_musd},
      {"investor_count", f.investor_count}, {"active_products", f.active_products},
      {"it_spend_musd", f.it_spend_musd}};
  for (const auto& [name, v] : scalars) {
    if (!std::isfinite(v) || v < 0) fail(line, id, std::string("features.") + name, "must be a non-negative number");
  }
  for (std::size_t i = 0; i < f.calls_last_24m.size(); ++i) {
    const double v = f.calls_last_24m[i];
    if (!std::isfinite(v) || v < 0 || v != std::floor(v)) {
      fail(line, id, "features.calls_last_24m[" + std::to_string(i) + "]", "must be a non-negative integer");
    }
  }

  if (r.calls.empty()) fail(line, id, "calls", "at least one call is required");
  std::optional<std::size_t> dim;
  for (std::size_t l = 0; l < r.calls.size(); ++l) {
    const Call& c = r.calls[l];
    const std::string base = "calls[" + std::to_string(l) + "]";
    if (c.exchanges.empty()) fail(line, id, base + ".exchanges", "at least one exchange is required");
    if (l > 0 && !(r.calls[l - 1].date < c.date)) {
      fail(line, id, base + ".date", "calls must be strictly ordered by date");
    }
    for (std::size_t k = 0; k < c.exchanges.size(); ++k) {
      const Exchange& x = c.exchanges[k];
      const std::string xb = base + ".exchanges[" + std::to_string(k) + "]";
      if (!x.question_text && !x.q_emb) fail(line, id, xb + ".q", "question needs text or an embedding");
      if (!x.answer_text && !x.a_emb) fail(line, id, xb + ".a", "answer needs text or an embedding");
      for (const auto* e : {&x.q_emb, &x.a_emb}) {
        if (!*e) continue;
        if (!(*e)->all_finite()) fail(line, id, xb, "embedding contains non-finite values");
        if (!dim) dim = (*e)->size();
        if ((*e)->size() != *dim) fail(line, id, xb, "embedding widths differ within the record");
      }
    }
  }
  if (r.outcome_date < r.calls.back().date) {
    fail(line, id, "outcome_date", "precedes the last call date " + r.calls.back().date.iso());
  }
}

namespace codec {

json tensor_values(const Tensor& t) { return json(t.storage()); }

Tensor tensor_from_values(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw InvalidInput(std::string(what) + " must be a non-empty number array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw InvalidInput(std::string(what) + " must contain only numbers");
    v.push_back(x.get<double>());
  }
  return Tensor::vector(std::move(v));
}

json record_to_json(const CompanyRecord& r) {
  const auto& f = r.features;
  json features = {{"age_months", f.age_months},
                   {"founders_count", f.founders_count},
                   {"rounds", f.rounds},
                   {"raised_funding_musd", f.raised_funding_musd},
                   {"investor_count", f.investor_count},
                   {"active_products", f.active_products},
                   {"it_spend_musd", f.it_spend_musd},
                   {"calls_last_24m", f.calls_last_24m},
                   {"hq", f.hq},
                   {"trademark_class", f.trademark_class}};
  json calls = json::array();
  for (const auto& c : r.calls) {
    json xs = json::array();
    for (const auto& x : c.exchanges) {
      xs.push_back({{"q", x.question_text ? json(*x.question_text) : json(nullptr)},
                    {"a", x.answer_text ? json(*x.answer_text) : json(nullptr)},
                    {"q_emb", x.q_emb ? tensor_values(*x.q_emb) : json(nullptr)},
                    {"a_emb", x.a_emb ? tensor_values(*x.a_emb) : json(nullptr)}});
    }
    calls.push_back({{"call_id", c.call_id},
                     {"date", c.date.iso()},
                     {"expert_type", std::string(to_string(c.expert_type))},
                     {"exchanges", std::move(xs)}});
  }
  return {{"company_id", r.company_id},
          {"label", r.label},
          {"outcome_date", r.outcome_date.iso()},
          {"features", std::move(features)},
          {"calls", std::move(calls)}};
}

CompanyRecord record_from_json(const json& j, std::size_t line) {
  CompanyRecord r;
  if (!j.is_object()) throw ValidationError(line, "record must be a JSON object");
  if (!j.contains("company_id") || !j["company_id"].is_string()) {
    throw ValidationError(line, "field 'company_id' must be a string");
  }
  r.company_id = j["company_id"].get<std::string>();
  const std::string& id = r.company_id;

  auto req = [&](const json& obj, const char* key, const std::string& path) -> const json& {
    if (!obj.contains(key)) fail(line, id, path, "missing");
    return obj.at(key);
  };
  auto number = [&](const json& obj, const char* key, const std::string& path) {
    const json& v = req(obj, key, path);
    if (!v.is_number()) fail(line, id, path, "must be a number");
    return v.get<double>();
  };
  auto date = [&](const json& v, const std::string& path) {
    if (!v.is_string()) fail(line, id, path, "must be a YYYY-MM-DD string");
    try {
      return Date::parse(v.get<std::string>());
    } catch (const InvalidInput& e) {
      fail(line, id, path, e.what());
    }
  };

  const json& label = req(j, "label", "label");
  if (!label.is_number_integer()) fail(line, id, "label", "must be 0 or 1");
  r.label = label.get<int>();
  r.outcome_date = date(req(j, "outcome_date", "outcome_date"), "outcome_date");

  const json& fj = req(j, "features", "features");
  if (!fj.is_object()) fail(line, id, "features", "must be an object");
  auto& f = r.features;
  f.age_months = number(fj, "age_months", "features.age_months");
  f.founders_count = number(fj, "founders_count", "features.founders_count");
  f.rounds = number(fj, "rounds", "features.rounds");
  f.raised_funding_musd = number(fj, "raised_funding_musd", "features.raised_funding_musd");
  f.investor_count = number(fj, "investor_count", "features.investor_count");
  f.active_products = number(fj, "active_products", "features.active_products");
  f.it_spend_musd = number(fj, "it_spend_musd", "features.it_spend_musd");
  const json& hist = req(fj, "calls_last_24m", "features.calls_last_24m");
  if (!hist.is_array() || hist.size() != kCallHistoryMonths) {
    fail(line, id, "features.calls_last_24m", "must be an array of 24 numbers");
  }
  for (std::size_t i = 0; i < kCallHistoryMonths; ++i) {
    if (!hist[i].is_number()) fail(line, id, "features.calls_last_24m", "must contain only numbers");
    f.calls_last_24m[i] = hist[i].get<double>();
  }
  const json& hq = req(fj, "hq", "features.hq");
  if (!hq.is_string()) fail(line, id, "features.hq", "must be a string");
  f.hq = hq.get<std::string>();
  const json& tm = req(fj, "trademark_class", "features.trademark_class");
  if (!tm.is_string()) fail(line, id, "features.trademark_class", "must be a string");
  f.trademark_class = tm.get<std::string>();

  const json& cj = req(j, "calls", "calls");
  if (!cj.is_array()) fail(line, id, "calls", "must be an array");
  for (std::size_t l = 0; l < cj.size(); ++l) {
    const std::string base = "calls[" + std::to_string(l) + "]";
    const json& c = cj[l];
    if (!c.is_object()) fail(line, id, base, "must be an object");
    Call call;
    const json& cid = req(c, "call_id", base + ".call_id");
    if (!cid.is_string()) fail(line, id, base + ".call_id", "must be a string");
    call.call_id = cid.get<std::string>();
    call.date = date(req(c, "date", base + ".date"), base + ".date");
    const json& et = req(c, "expert_type", base + ".expert_type");
    auto type = et.is_string() ? parse_expert_type(et.get<std::string>()) : std::nullopt;
    if (!type) fail(line, id, base + ".expert_type", "must be one of Competitor|Customer|FormerExec|IndustryCons|Partner");
    call.expert_type = *type;
    const json& xs = req(c, "exchanges", base + ".exchanges");
    if (!xs.is_array()) fail(line, id, base + ".exchanges", "must be an array");
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const std::string xb = base + ".exchanges[" + std::to_string(k) + "]";
      const json& x = xs[k];
      if (!x.is_object()) fail(line, id, xb, "must be an object");
      Exchange ex;
      auto text = [&](const char* key) -> std::optional<std::string> {
        if (!x.contains(key) || x[key].is_null()) return std::nullopt;
        if (!x[key].is_string()) fail(line, id, xb + "." + key, "must be a string or null");
        return x[key].get<std::string>();
      };
      auto emb = [&](const char* key) -> std::optional<Tensor> {
        if (!x.contains(key) || x[key].is_null()) return std::nullopt;
        try {
          return codec::tensor_from_values(x[key], key);
        } catch (const InvalidInput& e) {
          fail(line, id, xb + "." + key, e.what());
        }
      };
      ex.question_text = text("q");
      ex.answer_text = text("a");
      ex.q_emb = emb("q_emb");
      ex.a_emb = emb("a_emb");
      call.exchanges.push_back(std::move(ex));
    }
    r.calls.push_back(std::move(call));
  }
  validate_record(r, line);
  return r;
}

}  // namespace codec

CompanyRecord parse_record(std::string_view json_line, std::size_t line) {
  codec::json j;
  try {
    j = codec::json::parse(json_line);
  } catch (const codec::json::parse_error& e) {
    throw ValidationError(line, std::string("malformed JSON: ") + e.what());
  }
  return codec::record_from_json(j, line);
}

std::string serialize_record(const CompanyRecord& record) { return codec::record_to_json(record).dump(); }

std::vector<CompanyRecord> parse_dataset_text(std::string_view text) {
  std::vector<CompanyRecord> out;
  std::optional<std::size_t> dim;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    CompanyRecord r = parse_record(line, line_no);
    if (auto d = r.embedding_dim()) {
      if (dim && *dim != *d) {
        throw ValidationError(line_no, "company '" + r.company_id + "': embedding width " + std::to_string(*d) +
                                           " differs from earlier records (" + std::to_string(*dim) + ")");
      }
      dim = d;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CompanyRecord> parse_dataset(const std::filesystem::path& path) {
  return parse_dataset_text(read_file(path));
}

std::string serialize_dataset(std::span<const CompanyRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const CompanyRecord> records) {
  write_file_atomic(path, serialize_dataset(records));
}

}  // namespace seqbelief
