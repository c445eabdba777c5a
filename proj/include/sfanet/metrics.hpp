#pragma once

#include "sfanet/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sfanet::metrics {

struct ScoredEntry {
  std::string id;
  double score = 0.0;
  Label label = Label::fake;
};

using ScoredSet = std::vector<ScoredEntry>;

/// Which label counts as "positive" for precision/recall/F1. Default: real.
enum class PositiveClass { real, fake };

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Detection-cost parameters; the target class is real.
struct DcfParams {
  double c_miss = 1.0;
  double c_fa = 1.0;
  double p_target = 0.5;
  void validate() const;
};

struct MetricReport {
  double threshold = 0.0;
  Confusion counts;
  double accuracy = 0.0;
  /// Absent when the ratio is undefined (zero denominator).
  std::optional<double> precision, recall, f1;
  /// Absent when only one class is present.
  std::optional<double> auc, eer, dcf;
};

/// Confusion-derived fields only.
MetricReport threshold_metrics(const ScoredSet& set, const DecisionPolicy& policy,
                               PositiveClass positive = PositiveClass::real);

/// P(random real outscores random fake), ties counted one half.
double roc_auc(const ScoredSet& set);

/// Equal error rate with FPR(t) = #fake >= t / #fake and FNR(t) = #real < t / #real,
/// linearly interpolated between the adjacent sweep points where FNR - FPR changes sign.
double eer(const ScoredSet& set);

/// Normalised minimum detection cost over all thresholds.
double min_dcf(const ScoredSet& set, const DcfParams& params = {});

/// Normalised detection cost at one fixed threshold.
double dcf_at(const ScoredSet& set, double threshold, const DcfParams& params = {});

/// Full report: threshold metrics plus AUC/EER/min-DCF when both classes are present.
MetricReport evaluate(const ScoredSet& set, const DecisionPolicy& policy,
                      const DcfParams& params = {},
                      PositiveClass positive = PositiveClass::real);

struct CategoryStat {
  Category category;
  long n = 0;
  double accuracy = 0.0;
};

/// sum(n_i a_i) / sum(n_i).
double weighted_accuracy(std::span<const CategoryStat> stats);

// ---------------------------------------------------------------------------
// Threshold sweep

struct CalibrationRow {
  double threshold = 0.0;
  Confusion counts;
  double accuracy = 0.0;
  double dcf = 0.0;
};

struct Calibration {
  std::vector<CalibrationRow> rows;
  std::optional<double> eer;
  std::optional<double> min_dcf;
};

/// Evenly spaced thresholds strictly inside (0,1), from `lo` to `hi` inclusive.
std::vector<double> threshold_grid(double lo, double hi, double step);

Calibration calibrate(const ScoredSet& set, std::span<const double> thresholds,
                      const DcfParams& params = {});

/// Flat "key=value" lines in this order: auc, accuracy, f1, precision, recall, eer, dcf, threshold.
std::string format_report(const MetricReport& r);
std::string format_calibration(const Calibration& c);

/// The relabelled set with real and fake swapped.
ScoredSet swap_labels(const ScoredSet& set);

}  // namespace sfanet::metrics
