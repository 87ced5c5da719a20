#include "seqbelief/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"

namespace seqbelief {

void CostModel::validate() const {
  if (!(ic > 0.0)) throw InvalidInput("cost model: ic must be positive");
  if (!(fiv_tp >= 0.0 && fiv_fp >= 0.0 && oc >= 0.0)) throw InvalidInput("cost model values must be non-negative");
}

namespace {

void check_binary(std::span<const int> v, const char* what) {
  for (int x : v) {
    if (x != 0 && x != 1) throw InvalidInput(std::string(what) + " must contain only 0 and 1");
  }
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double tp, double fp, double fn) {
  const double p = ratio(tp, tp + fp);
  const double r = ratio(tp, tp + fn);
  return ratio(2.0 * p * r, p + r);
}

}  // namespace

ConfusionCounts confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw InvalidInput("y_true and y_pred differ in length");
  check_binary(y_true, "y_true");
  check_binary(y_pred, "y_pred");
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 1) {
      (y_pred[i] == 1 ? c.tp : c.fn)++;
    } else {
      (y_pred[i] == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

ClassificationMetrics classification_metrics(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.empty()) throw InvalidInput("classification metrics need at least one example");
  const auto c = confusion(y_true, y_pred);
  const double tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn, n = c.total();
  ClassificationMetrics m;
  m.accuracy = (tp + tn) / n;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = f1_of(tp, fp, fn);
  const double f1_neg = f1_of(tn, fn, fp);
  m.macro_f1 = 0.5 * (m.f1 + f1_neg);
  m.weighted_f1 = ((tp + fn) * m.f1 + (tn + fp) * f1_neg) / n;
  return m;
}

double auc(std::span<const int> y_true, std::span<const double> scores) {
  if (y_true.size() != scores.size()) throw InvalidInput("y_true and scores differ in length");
  check_binary(y_true, "y_true");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInput("AUC scores must be finite");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y_true[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("AUC needs both positive and negative examples");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double roi(const ConfusionCounts& c, const CostModel& m) {
  m.validate();
  if (c.tp + c.fp == 0) throw UndefinedMetric("ROI is undefined when no company is backed (tp + fp = 0)");
  const double tp = c.tp, fp = c.fp, fn = c.fn;
  const double invested = (tp + fp) * m.ic;
  return (tp * m.fiv_tp + fp * m.fiv_fp - invested - fn * m.oc) / invested * 100.0;
}

double moic(const ConfusionCounts& c, const CostModel& m) {
  m.validate();
  if (c.tp + c.fp == 0) throw UndefinedMetric("MOIC is undefined when no company is backed (tp + fp = 0)");
  const double tp = c.tp, fp = c.fp, fn = c.fn;
  return (tp * m.fiv_tp + fp * m.fiv_fp - fn * m.oc) / ((tp + fp) * m.ic);
}

std::string cost_model_to_json(const CostModel& m) {
  return codec::json{{"fiv_tp", m.fiv_tp}, {"fiv_fp", m.fiv_fp}, {"ic", m.ic}, {"oc", m.oc}}.dump(2);
}

CostModel cost_model_from_json(std::string_view text) {
  try {
    const auto j = codec::json::parse(text);
    if (!j.is_object()) throw InvalidInput("cost model must be a JSON object");
    CostModel m;
    for (const auto& [key, value] : j.items()) {
      const double v = value.get<double>();
      if (key == "fiv_tp") m.fiv_tp = v;
      else if (key == "fiv_fp") m.fiv_fp = v;
      else if (key == "ic") m.ic = v;
      else if (key == "oc") m.oc = v;
      else throw InvalidInput("unknown cost model field '" + key + "'");
    }
    m.validate();
    return m;
  } catch (const codec::json::exception& e) {
    throw InvalidInput(std::string("malformed cost model: ") + e.what());
  }
}

std::string evaluation_report_json(std::span<const int> y_true, std::span<const int> y_pred,
                                   std::span<const double> scores, double threshold, const CostModel& m) {
  m.validate();
  const auto cm = classification_metrics(y_true, y_pred);
  const auto c = confusion(y_true, y_pred);
  codec::json metrics = {{"accuracy", cm.accuracy},     {"precision", cm.precision},
                         {"recall", cm.recall},         {"f1", cm.f1},
                         {"weighted_f1", cm.weighted_f1}, {"macro_f1", cm.macro_f1}};
  try {
    metrics["auc"] = auc(y_true, scores);
  } catch (const UndefinedMetric&) {
    metrics["auc"] = nullptr;
  }
  if (c.tp + c.fp > 0) {
    metrics["roi"] = roi(c, m);
    metrics["moic"] = moic(c, m);
  } else {
    metrics["roi"] = nullptr;
    metrics["moic"] = nullptr;
  }
  const codec::json report = {
      {"n", y_true.size()},
      {"threshold", threshold},
      {"metrics", std::move(metrics)},
      {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}},
      {"cost_model", {{"fiv_tp", m.fiv_tp}, {"fiv_fp", m.fiv_fp}, {"ic", m.ic}, {"oc", m.oc}}}};
  return report.dump(2);
}

}  // namespace seqbelief
