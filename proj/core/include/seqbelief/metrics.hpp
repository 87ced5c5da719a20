#pragma once

#include <optional>
#include <span>
#include <string>

namespace seqbelief {

/// Portfolio cost model, in millions.
struct CostModel {
  double fiv_tp = 248.44;  // final value of a correctly backed success
  double fiv_fp = 0.0;     // final value of a backed failure
  double ic = 10.24;       // investment cost per backed company
  double oc = 198.81;      // opportunity cost per missed success

  void validate() const;
  friend bool operator==(const CostModel&, const CostModel&) = default;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
};

ConfusionCounts confusion(std::span<const int> y_true, std::span<const int> y_pred);
ClassificationMetrics classification_metrics(std::span<const int> y_true, std::span<const int> y_pred);

/// Probability a random positive outscores a random negative; ties count 1/2.
/// Throws UndefinedMetric unless both classes are present.
double auc(std::span<const int> y_true, std::span<const double> scores);

/// Percent return on deployed capital; throws UndefinedMetric when tp + fp = 0.
double roi(const ConfusionCounts& c, const CostModel& m = {});
/// Multiple on invested capital; throws UndefinedMetric when tp + fp = 0.
double moic(const ConfusionCounts& c, const CostModel& m = {});

std::string cost_model_to_json(const CostModel& m);
CostModel cost_model_from_json(std::string_view text);

/// JSON report with metrics, confusion counts and the cost model. ROI and
/// MOIC are null when nothing was backed; AUC is null with one class.
std::string evaluation_report_json(std::span<const int> y_true, std::span<const int> y_pred,
                                   std::span<const double> scores, double threshold, const CostModel& m);

}  // namespace seqbelief
