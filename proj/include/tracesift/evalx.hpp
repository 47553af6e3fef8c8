#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracesift/core.hpp"
#include "tracesift/detect.hpp"
#include "tracesift/model_io.hpp"

namespace tracesift {

// Exact fraction over 64-bit terms, always normalized (gcd 1, positive
// denominator). Scoring hands out thirds and similar fractions; keeping
// them exact makes worked examples reproducible to the last digit.
class Rational {
 public:
  Rational() = default;
  Rational(long long value) : num_(value) {}  // NOLINT: implicit by design
  Rational(long long num, long long den);

  long long num() const { return num_; }
  long long den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  // "2/3", or just "2" for integers.
  std::string to_string() const;

  Rational& operator+=(const Rational& o);
  Rational& operator-=(const Rational& o);
  Rational& operator*=(const Rational& o);
  Rational& operator/=(const Rational& o);  // division by zero -> ContractError

  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
  friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
  friend Rational operator-(const Rational& a) { return Rational(-a.num_, a.den_); }

  bool operator==(const Rational&) const = default;
  bool operator<(const Rational& o) const;
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator<=(const Rational& o) const { return !(o < *this); }
  bool operator>=(const Rational& o) const { return !(*this < o); }

 private:
  long long num_ = 0;
  long long den_ = 1;
};

struct CategoryCounts {
  Rational tp, fp, fn;

  bool operator==(const CategoryCounts&) const = default;
  CategoryCounts& operator+=(const CategoryCounts& o);
};

// Per-trace (or summed) score: one cell per deviation kind plus the
// conforming class. Pattern cells hold fractional partial credit; the
// conforming cell is always a whole unit per trace.
struct ScoreCounts {
  std::array<CategoryCounts, kDeviationKindCount> pattern;
  CategoryCounts conforming;

  bool operator==(const ScoreCounts&) const = default;
  ScoreCounts& operator+=(const ScoreCounts& o);

  CategoryCounts& of(DeviationKind k) { return pattern[static_cast<size_t>(k)]; }
  const CategoryCounts& of(DeviationKind k) const { return pattern[static_cast<size_t>(k)]; }
};

// How the conforming category labels the two mixed outcomes.
// ConformingAsPositive treats a clean trace as the positive class
// (predicting deviations on a clean trace is a miss, i.e. FN);
// DeviatingAsPositive reads the same situation as a false alarm (FP). F1
// is identical under both, precision and recall trade places.
enum class ConformingLabeling : uint8_t { ConformingAsPositive, DeviatingAsPositive };

// Position-insensitive partial-credit scoring. Every pattern is reduced to
// its insert/skip primitive items; items match one-for-one within a
// (primitive kind, activity) bucket. Each ground-truth pattern carries unit
// mass split evenly over its items: matched items add tp to the pattern's
// own category, unmatched ones add fn. Predicted patterns carry unit mass
// the same way; unconsumed predicted items add fp to the prediction's
// category. When a bucket cannot match every item, mass-heavier patterns
// win (ties: the earlier pattern), which makes the total credit equal the
// best achievable over all matchings.
ScoreCounts score_trace(const std::vector<DeviationPattern>& gt,
                        const std::vector<DeviationPattern>& pred,
                        ConformingLabeling labeling = ConformingLabeling::ConformingAsPositive);

// Total matched ground-truth mass of a score, summed over pattern cells.
Rational total_tp(const ScoreCounts& counts);

struct CategoryMetrics {
  std::optional<Rational> precision, recall, f1;

  bool operator==(const CategoryMetrics&) const = default;
};

// Precision tp/(tp+fp), recall tp/(tp+fn), f1 = 2PR/(P+R); each cell is
// absent when its denominator is zero.
CategoryMetrics metrics_of(const CategoryCounts& c);

struct MetricsRow {
  std::string log;
  std::array<CategoryMetrics, kDeviationKindCount> pattern;
  CategoryMetrics conforming;

  CategoryMetrics& of(DeviationKind k) { return pattern[static_cast<size_t>(k)]; }
  const CategoryMetrics& of(DeviationKind k) const { return pattern[static_cast<size_t>(k)]; }
};

struct LogScore {
  std::string log;
  ScoreCounts counts;
};

// One row per log plus a macro row averaging each defined cell across logs
// (undefined cells are excluded; a cell defined nowhere stays undefined).
struct MetricsReport {
  std::vector<MetricsRow> per_log;
  MetricsRow macro;
};

MetricsReport aggregate_metrics(const std::vector<LogScore>& logs);

struct EvaluationOptions {
  ConformingLabeling labeling = ConformingLabeling::ConformingAsPositive;
};

// Detection results scored against ground truth. Traces whose reply never
// parsed count toward the failure rate and keep their ground-truth fn mass,
// but stay out of the conforming cell: an unreadable reply is neither a
// "conforming" nor a "deviating" claim.
struct Evaluation {
  ScoreCounts totals;
  size_t traces = 0;
  size_t parse_failures = 0;
  std::vector<std::string> failed_trace_ids;

  Rational failure_rate() const;
};

Evaluation evaluate_results(const std::vector<DetectionResult>& results,
                            const std::map<std::string, std::vector<DeviationPattern>>& ground_truth,
                            const EvaluationOptions& opts = {});

// Ground-truth composition of a set of bundles: trace and deviation counts
// by kind, plus the average number of deviations per trace.
struct DescriptiveStats {
  size_t logs = 0;
  size_t traces = 0;
  size_t conforming = 0;
  size_t deviating = 0;
  uint64_t deviations = 0;
  std::array<uint64_t, kDeviationKindCount> per_kind{};

  bool operator==(const DescriptiveStats&) const = default;

  double avg_deviations_per_trace() const;
  // Two decimals, truncated toward zero (30 deviations over 58 traces
  // displays as "0.51").
  std::string avg_display() const;
};

DescriptiveStats descriptive_stats(const std::vector<LogBundle>& bundles);

struct SeedOutcome {
  uint64_t seed = 0;
  bool ok = false;
  std::string error;    // set when the run for this seed threw
  ScoreCounts counts;   // meaningful only when ok
};

struct CategoryStd {
  std::optional<double> precision, recall, f1;
};

// Per-cell population standard deviation of the metrics across seeds.
// Cells are computed over the seeds where the metric is defined; fewer than
// two defined values leave the cell absent.
struct RobustnessReport {
  std::vector<SeedOutcome> seeds;
  std::array<CategoryStd, kDeviationKindCount> pattern;
  CategoryStd conforming;

  CategoryStd& of(DeviationKind k) { return pattern[static_cast<size_t>(k)]; }
  const CategoryStd& of(DeviationKind k) const { return pattern[static_cast<size_t>(k)]; }
};

// Runs the supplied pipeline once per seed (at least two) and reports how
// much each metric moves. A throwing seed is recorded with its error and
// excluded from the statistics.
RobustnessReport robustness_run(const std::vector<uint64_t>& seeds,
                                const std::function<ScoreCounts(uint64_t seed)>& run_seed);

struct RunTimings {
  std::optional<double> kb_population_seconds;
  std::vector<double> per_log_inference_seconds;
};

struct TimingReport {
  bool available = false;
  double kb_population_seconds = 0.0;
  double inference_mean_seconds = 0.0;
  size_t logs = 0;
};

// Available only when both phases were timed.
TimingReport timing_report(const RunTimings& timings);

// ---------------------------------------------------------------------------
// Report rendering

nlohmann::ordered_json counts_to_json(const ScoreCounts& counts);
nlohmann::ordered_json metrics_to_json(const MetricsReport& report);
nlohmann::ordered_json evaluation_to_json(const Evaluation& evaluation);
nlohmann::ordered_json stats_to_json(const DescriptiveStats& stats);
nlohmann::ordered_json robustness_to_json(const RobustnessReport& report);
nlohmann::ordered_json timing_to_json(const TimingReport& report);

// Aligned text: one block per log (pattern rows then the conforming row,
// precision/recall/f1 columns, "-" for undefined), then the macro block.
std::string format_metrics_table(const MetricsReport& report);
std::string metrics_to_csv(const MetricsReport& report);
std::string format_stats(const DescriptiveStats& stats);

}  // namespace tracesift
