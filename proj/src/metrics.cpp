#include "sfanet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace sfanet::metrics {

namespace {

void check_nonempty(const ScoredSet& set) {
  if (set.empty()) throw InvalidInput("metric requested on an empty scored set");
  for (const auto& e : set)
    if (!(e.score >= 0.0 && e.score <= 1.0))
      throw InvalidInput("score for " + e.id + " outside [0,1]");
}

struct ClassCounts {
  long real = 0, fake = 0;
};

ClassCounts count_classes(const ScoredSet& set) {
  ClassCounts c;
  for (const auto& e : set) (e.label == Label::real ? c.real : c.fake)++;
  return c;
}

ClassCounts require_both_classes(const ScoredSet& set, const char* what) {
  check_nonempty(set);
  const auto c = count_classes(set);
  if (c.real == 0 || c.fake == 0)
    throw InvalidInput(std::string(what) + " needs both real and fake samples");
  return c;
}

/// Operating points of the threshold sweep, in increasing threshold order. The
/// first point accepts everything, the last (threshold +inf) rejects everything.
struct OperatingPoint {
  double threshold;
  double fpr;
  double fnr;
};

std::vector<OperatingPoint> sweep(const ScoredSet& set, ClassCounts n) {
  std::vector<std::pair<double, Label>> sorted;
  sorted.reserve(set.size());
  for (const auto& e : set) sorted.emplace_back(e.score, e.label);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<OperatingPoint> pts;
  long real_below = 0;
  long fake_below = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double t = sorted[i].first;
    pts.push_back({t, static_cast<double>(n.fake - fake_below) / n.fake,
                   static_cast<double>(real_below) / n.real});
    for (; i < sorted.size() && sorted[i].first == t; ++i)
      (sorted[i].second == Label::real ? real_below : fake_below)++;
  }
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return pts;
}

double dcf_norm(const DcfParams& p) {
  return std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
}

double dcf_cost(const DcfParams& p, double fnr, double fpr) {
  return p.c_miss * p.p_target * fnr + p.c_fa * (1.0 - p.p_target) * fpr;
}

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Confusion confusion_at(const ScoredSet& set, const DecisionPolicy& policy, PositiveClass positive) {
  Confusion c;
  const Label pos = positive == PositiveClass::real ? Label::real : Label::fake;
  for (const auto& e : set) {
    const bool predicted_pos = decide(Score(e.score), policy) == pos;
    const bool actual_pos = e.label == pos;
    if (predicted_pos && actual_pos) ++c.tp;
    else if (predicted_pos) ++c.fp;
    else if (actual_pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace

void DcfParams::validate() const {
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) throw ConfigError("DCF costs must be positive");
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("DCF target prior must lie in (0,1)");
}

MetricReport threshold_metrics(const ScoredSet& set, const DecisionPolicy& policy,
                               PositiveClass positive) {
  check_nonempty(set);
  MetricReport r;
  r.threshold = policy.threshold();
  r.counts = confusion_at(set, policy, positive);
  const auto& c = r.counts;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0)
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  return r;
}

double roc_auc(const ScoredSet& set) {
  const auto n = require_both_classes(set, "AUC");
  std::vector<std::pair<double, Label>> sorted;
  sorted.reserve(set.size());
  for (const auto& e : set) sorted.emplace_back(e.score, e.label);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // Sum of 1-based midranks of the real samples.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    long reals = 0;
    for (; j < sorted.size() && sorted[j].first == sorted[i].first; ++j)
      if (sorted[j].second == Label::real) ++reals;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(reals);
    i = j;
  }
  const double nr = static_cast<double>(n.real);
  const double u = rank_sum - nr * (nr + 1.0) / 2.0;
  return u / (nr * static_cast<double>(n.fake));
}

double eer(const ScoredSet& set) {
  const auto n = require_both_classes(set, "EER");
  const auto pts = sweep(set, n);
  for (std::size_t j = 0; j < pts.size(); ++j) {
    const double d = pts[j].fnr - pts[j].fpr;
    if (d == 0.0) return pts[j].fpr;
    if (d > 0.0) {
      // j >= 1 because the first point has FNR = 0, FPR = 1.
      const auto& a = pts[j - 1];
      const auto& b = pts[j];
      const double da = a.fnr - a.fpr;
      const double t = -da / (d - da);
      return a.fpr + t * (b.fpr - a.fpr);
    }
  }
  return 0.5;  // unreachable: the last point has FNR - FPR = 1
}

double min_dcf(const ScoredSet& set, const DcfParams& params) {
  params.validate();
  const auto n = require_both_classes(set, "DCF");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : sweep(set, n)) best = std::min(best, dcf_cost(params, p.fnr, p.fpr));
  return best / dcf_norm(params);
}

double dcf_at(const ScoredSet& set, double threshold, const DcfParams& params) {
  params.validate();
  const auto n = require_both_classes(set, "DCF");
  long fa = 0, miss = 0;
  for (const auto& e : set) {
    if (e.label == Label::fake && e.score >= threshold) ++fa;
    if (e.label == Label::real && e.score < threshold) ++miss;
  }
  return dcf_cost(params, static_cast<double>(miss) / n.real, static_cast<double>(fa) / n.fake) /
         dcf_norm(params);
}

MetricReport evaluate(const ScoredSet& set, const DecisionPolicy& policy, const DcfParams& params,
                      PositiveClass positive) {
  MetricReport r = threshold_metrics(set, policy, positive);
  const auto n = count_classes(set);
  if (n.real > 0 && n.fake > 0) {
    // Ranking quality does not depend on which class is called positive.
    r.auc = roc_auc(set);
    r.eer = eer(set);
    r.dcf = min_dcf(set, params);
  }
  return r;
}

double weighted_accuracy(std::span<const CategoryStat> stats) {
  if (stats.empty()) throw InvalidInput("weighted accuracy of an empty category list");
  double num = 0.0;
  double den = 0.0;
  for (const auto& s : stats) {
    if (s.n < 1) throw InvalidInput("category " + to_string(s.category) + " has no samples");
    if (!(s.accuracy >= 0.0 && s.accuracy <= 1.0))
      throw InvalidInput("category " + to_string(s.category) + " accuracy outside [0,1]");
    num += static_cast<double>(s.n) * s.accuracy;
    den += static_cast<double>(s.n);
  }
  return num / den;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo > 0.0) || !(hi < 1.0) || lo > hi)
    throw ConfigError("threshold grid needs 0 < lo <= hi < 1 and step > 0");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

Calibration calibrate(const ScoredSet& set, std::span<const double> thresholds,
                      const DcfParams& params) {
  check_nonempty(set);
  const auto n = count_classes(set);
  const bool both = n.real > 0 && n.fake > 0;
  Calibration c;
  std::vector<double> ts(thresholds.begin(), thresholds.end());
  std::sort(ts.begin(), ts.end());
  for (double t : ts) {
    const auto r = threshold_metrics(set, DecisionPolicy(t));
    c.rows.push_back({t, r.counts, r.accuracy, both ? dcf_at(set, t, params) : 0.0});
  }
  if (both) {
    c.eer = eer(set);
    c.min_dcf = min_dcf(set, params);
  }
  return c;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << *v;
  return os.str();
}

}  // namespace

std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  os << "auc=" << fmt(r.auc) << '\n'
     << "accuracy=" << fmt(r.accuracy) << '\n'
     << "f1=" << fmt(r.f1) << '\n'
     << "precision=" << fmt(r.precision) << '\n'
     << "recall=" << fmt(r.recall) << '\n'
     << "eer=" << fmt(r.eer) << '\n'
     << "dcf=" << fmt(r.dcf) << '\n'
     << "threshold=" << fmt(r.threshold) << '\n'
     << "tp=" << r.counts.tp << '\n'
     << "fp=" << r.counts.fp << '\n'
     << "tn=" << r.counts.tn << '\n'
     << "fn=" << r.counts.fn << '\n';
  return os.str();
}

std::string format_calibration(const Calibration& c) {
  std::ostringstream os;
  os << "threshold,tp,fp,tn,fn,accuracy,dcf\n";
  for (const auto& r : c.rows)
    os << fmt(r.threshold) << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn << ','
       << r.counts.fn << ',' << fmt(r.accuracy) << ',' << fmt(r.dcf) << '\n';
  os << "# eer=" << fmt(c.eer) << " min_dcf=" << fmt(c.min_dcf) << '\n';
  return os.str();
}

ScoredSet swap_labels(const ScoredSet& set) {
  ScoredSet out = set;
  for (auto& e : out) e.label = e.label == Label::real ? Label::fake : Label::real;
  return out;
}

}  // namespace sfanet::metrics
