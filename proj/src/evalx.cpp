#include "tracesift/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tracesift/errors.hpp"

namespace tracesift {

namespace {

long long narrow(__int128 v, const char* where) {
  if (v > static_cast<__int128>(INT64_MAX) || v < static_cast<__int128>(INT64_MIN)) {
    throw Error(std::string("rational overflow in ") + where);
  }
  return static_cast<long long>(v);
}

}  // namespace

Rational::Rational(long long num, long long den) : num_(num), den_(den) {
  if (den_ == 0) throw ContractError("rational denominator is zero");
  if (den_ < 0) {
    num_ = -num_;
    den_ = -den_;
  }
  const long long g = std::gcd(num_ < 0 ? -num_ : num_, den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational& Rational::operator+=(const Rational& o) {
  const __int128 num = static_cast<__int128>(num_) * o.den_ + static_cast<__int128>(o.num_) * den_;
  const __int128 den = static_cast<__int128>(den_) * o.den_;
  // Reduce in 128 bits before narrowing so intermediate growth cannot trap
  // values that are representable once normalized.
  __int128 a = num < 0 ? -num : num;
  __int128 b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  const __int128 gcd128 = a == 0 ? 1 : a;
  *this = Rational(narrow(num / gcd128, "+"), narrow(den / gcd128, "+"));
  return *this;
}

Rational& Rational::operator-=(const Rational& o) { return *this += Rational(-o.num_, o.den_); }

Rational& Rational::operator*=(const Rational& o) {
  // Cross-reduce first to keep the products small.
  const long long g1 = std::gcd(num_ < 0 ? -num_ : num_, o.den_);
  const long long g2 = std::gcd(o.num_ < 0 ? -o.num_ : o.num_, den_);
  const __int128 num = static_cast<__int128>(num_ / g1) * (o.num_ / g2);
  const __int128 den = static_cast<__int128>(den_ / g2) * (o.den_ / g1);
  *this = Rational(narrow(num, "*"), narrow(den, "*"));
  return *this;
}

Rational& Rational::operator/=(const Rational& o) {
  if (o.num_ == 0) throw ContractError("rational division by zero");
  return *this *= Rational(o.den_, o.num_);
}

bool Rational::operator<(const Rational& o) const {
  return static_cast<__int128>(num_) * o.den_ < static_cast<__int128>(o.num_) * den_;
}

CategoryCounts& CategoryCounts::operator+=(const CategoryCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ScoreCounts& ScoreCounts::operator+=(const ScoreCounts& o) {
  for (size_t i = 0; i < pattern.size(); ++i) pattern[i] += o.pattern[i];
  conforming += o.conforming;
  return *this;
}

namespace {

// One pattern's presence in a (primitive kind, activity) bucket.
struct BucketShare {
  size_t pattern;       // index into the originating list
  DeviationKind kind;   // category that earns the credit/charge
  Rational item_value;  // 1 / primitive mass of the pattern
  int count;            // item occurrences in this bucket
};

struct BucketSide {
  std::vector<BucketShare> shares;
  int total = 0;
};

struct Bucket {
  BucketSide gt, pred;
};

using BucketKey = std::pair<PrimitiveKind, Activity>;

void fill_side(const std::vector<DeviationPattern>& patterns, bool gt_side,
               std::map<BucketKey, Bucket>& buckets) {
  for (size_t i = 0; i < patterns.size(); ++i) {
    const int mass = primitive_mass(patterns[i]);
    const Rational value(1, mass);
    for (const PrimitiveItem& item : normalize_deviation(patterns[i])) {
      Bucket& bucket = buckets[{item.kind, item.activity}];
      BucketSide& side = gt_side ? bucket.gt : bucket.pred;
      side.shares.push_back({i, patterns[i].kind, value, item.multiplicity});
      side.total += item.multiplicity;
    }
  }
}

// Heavier items first so the matched mass is the maximum achievable; the
// earlier pattern wins ties to keep attribution deterministic.
void sort_shares(std::vector<BucketShare>& shares) {
  std::sort(shares.begin(), shares.end(), [](const BucketShare& a, const BucketShare& b) {
    if (a.item_value != b.item_value) return b.item_value < a.item_value;
    return a.pattern < b.pattern;
  });
}

}  // namespace

ScoreCounts score_trace(const std::vector<DeviationPattern>& gt,
                        const std::vector<DeviationPattern>& pred, ConformingLabeling labeling) {
  ScoreCounts out;

  if (gt.empty() && pred.empty()) {
    out.conforming.tp += 1;
  } else if (gt.empty()) {
    // Clean trace, deviations predicted.
    (labeling == ConformingLabeling::ConformingAsPositive ? out.conforming.fn : out.conforming.fp) += 1;
  } else if (pred.empty()) {
    // Deviating trace claimed clean.
    (labeling == ConformingLabeling::ConformingAsPositive ? out.conforming.fp : out.conforming.fn) += 1;
  }

  std::map<BucketKey, Bucket> buckets;
  fill_side(gt, true, buckets);
  fill_side(pred, false, buckets);

  for (auto& [key, bucket] : buckets) {
    const int matched = std::min(bucket.gt.total, bucket.pred.total);

    sort_shares(bucket.gt.shares);
    int left = matched;
    for (const BucketShare& share : bucket.gt.shares) {
      const int take = std::min(left, share.count);
      left -= take;
      if (take > 0) out.of(share.kind).tp += share.item_value * take;
      if (share.count > take) out.of(share.kind).fn += share.item_value * (share.count - take);
    }

    sort_shares(bucket.pred.shares);
    left = matched;
    for (const BucketShare& share : bucket.pred.shares) {
      const int take = std::min(left, share.count);
      left -= take;
      if (share.count > take) out.of(share.kind).fp += share.item_value * (share.count - take);
    }
  }

  return out;
}

Rational total_tp(const ScoreCounts& counts) {
  Rational sum;
  for (const CategoryCounts& c : counts.pattern) sum += c.tp;
  return sum;
}

CategoryMetrics metrics_of(const CategoryCounts& c) {
  CategoryMetrics m;
  const Rational p_den = c.tp + c.fp;
  const Rational r_den = c.tp + c.fn;
  if (p_den > 0) m.precision = c.tp / p_den;
  if (r_den > 0) m.recall = c.tp / r_den;
  if (m.precision && m.recall) {
    const Rational sum = *m.precision + *m.recall;
    if (sum > 0) m.f1 = Rational(2) * *m.precision * *m.recall / sum;
  }
  return m;
}

namespace {

MetricsRow metrics_row(const std::string& log, const ScoreCounts& counts) {
  MetricsRow row;
  row.log = log;
  for (size_t i = 0; i < counts.pattern.size(); ++i) row.pattern[i] = metrics_of(counts.pattern[i]);
  row.conforming = metrics_of(counts.conforming);
  return row;
}

std::optional<Rational> mean_of_defined(
    const std::vector<MetricsRow>& rows,
    const std::function<const std::optional<Rational>&(const MetricsRow&)>& cell) {
  Rational sum;
  long long n = 0;
  for (const MetricsRow& row : rows) {
    if (const auto& v = cell(row)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / Rational(n);
}

}  // namespace

MetricsReport aggregate_metrics(const std::vector<LogScore>& logs) {
  MetricsReport report;
  for (const LogScore& log : logs) report.per_log.push_back(metrics_row(log.log, log.counts));

  report.macro.log = "macro";
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    report.macro.pattern[i].precision = mean_of_defined(
        report.per_log, [i](const MetricsRow& r) -> const std::optional<Rational>& {
          return r.pattern[i].precision;
        });
    report.macro.pattern[i].recall = mean_of_defined(
        report.per_log,
        [i](const MetricsRow& r) -> const std::optional<Rational>& { return r.pattern[i].recall; });
    report.macro.pattern[i].f1 = mean_of_defined(
        report.per_log,
        [i](const MetricsRow& r) -> const std::optional<Rational>& { return r.pattern[i].f1; });
  }
  report.macro.conforming.precision = mean_of_defined(
      report.per_log,
      [](const MetricsRow& r) -> const std::optional<Rational>& { return r.conforming.precision; });
  report.macro.conforming.recall = mean_of_defined(
      report.per_log,
      [](const MetricsRow& r) -> const std::optional<Rational>& { return r.conforming.recall; });
  report.macro.conforming.f1 = mean_of_defined(
      report.per_log,
      [](const MetricsRow& r) -> const std::optional<Rational>& { return r.conforming.f1; });
  return report;
}

Rational Evaluation::failure_rate() const {
  if (traces == 0) return Rational(0);
  return Rational(static_cast<long long>(parse_failures), static_cast<long long>(traces));
}

Evaluation evaluate_results(const std::vector<DetectionResult>& results,
                            const std::map<std::string, std::vector<DeviationPattern>>& ground_truth,
                            const EvaluationOptions& opts) {
  Evaluation evaluation;
  for (const DetectionResult& result : results) {
    const auto it = ground_truth.find(result.trace_id);
    if (it == ground_truth.end()) {
      throw ContractError("detection result for unknown trace \"" + result.trace_id + "\"");
    }
    ++evaluation.traces;
    if (result.parse_status == ParseStatus::Failed) {
      ++evaluation.parse_failures;
      evaluation.failed_trace_ids.push_back(result.trace_id);
      // The ground truth still went undetected, but an unreadable reply is
      // not a conformance claim, so the conforming cell stays untouched.
      ScoreCounts counts = score_trace(it->second, {}, opts.labeling);
      counts.conforming = CategoryCounts{};
      evaluation.totals += counts;
      continue;
    }
    evaluation.totals += score_trace(it->second, result.deviations, opts.labeling);
  }
  return evaluation;
}

double DescriptiveStats::avg_deviations_per_trace() const {
  if (traces == 0) return 0.0;
  return static_cast<double>(deviations) / static_cast<double>(traces);
}

std::string DescriptiveStats::avg_display() const {
  uint64_t hundredths = 0;
  if (traces != 0) hundredths = deviations * 100 / traces;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%llu.%02llu",
                static_cast<unsigned long long>(hundredths / 100),
                static_cast<unsigned long long>(hundredths % 100));
  return buf;
}

DescriptiveStats descriptive_stats(const std::vector<LogBundle>& bundles) {
  DescriptiveStats stats;
  for (const LogBundle& bundle : bundles) {
    ++stats.logs;
    for (const Trace& trace : bundle.log.traces()) {
      ++stats.traces;
      const auto it = bundle.ground_truth.find(trace.id);
      const auto& deviations = it->second;
      if (deviations.empty()) {
        ++stats.conforming;
      } else {
        ++stats.deviating;
      }
      stats.deviations += deviations.size();
      for (const DeviationPattern& d : deviations) ++stats.per_kind[static_cast<size_t>(d.kind)];
    }
  }
  return stats;
}

namespace {

std::optional<double> population_std(const std::vector<double>& values) {
  if (values.size() < 2) return std::nullopt;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
  double sq = 0.0;
  for (const double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / static_cast<double>(values.size()));
}

CategoryStd category_std(const std::vector<CategoryMetrics>& cells) {
  std::vector<double> precision, recall, f1;
  for (const CategoryMetrics& m : cells) {
    if (m.precision) precision.push_back(m.precision->to_double());
    if (m.recall) recall.push_back(m.recall->to_double());
    if (m.f1) f1.push_back(m.f1->to_double());
  }
  return {population_std(precision), population_std(recall), population_std(f1)};
}

}  // namespace

RobustnessReport robustness_run(const std::vector<uint64_t>& seeds,
                                const std::function<ScoreCounts(uint64_t seed)>& run_seed) {
  if (seeds.size() < 2) throw ContractError("robustness needs at least two seeds");
  if (!run_seed) throw ContractError("robustness needs a pipeline to run");

  RobustnessReport report;
  std::vector<MetricsRow> rows;
  for (const uint64_t seed : seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    try {
      outcome.counts = run_seed(seed);
      outcome.ok = true;
      rows.push_back(metrics_row(std::to_string(seed), outcome.counts));
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    report.seeds.push_back(std::move(outcome));
  }

  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    std::vector<CategoryMetrics> cells;
    for (const MetricsRow& row : rows) cells.push_back(row.pattern[i]);
    report.pattern[i] = category_std(cells);
  }
  std::vector<CategoryMetrics> conforming_cells;
  for (const MetricsRow& row : rows) conforming_cells.push_back(row.conforming);
  report.conforming = category_std(conforming_cells);
  return report;
}

TimingReport timing_report(const RunTimings& timings) {
  TimingReport report;
  if (!timings.kb_population_seconds || timings.per_log_inference_seconds.empty()) {
    return report;
  }
  report.available = true;
  report.kb_population_seconds = *timings.kb_population_seconds;
  report.logs = timings.per_log_inference_seconds.size();
  report.inference_mean_seconds =
      std::accumulate(timings.per_log_inference_seconds.begin(),
                      timings.per_log_inference_seconds.end(), 0.0) /
      static_cast<double>(report.logs);
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

using nlohmann::ordered_json;

ordered_json category_counts_json(const CategoryCounts& c) {
  ordered_json j;
  j["tp"] = c.tp.to_double();
  j["fp"] = c.fp.to_double();
  j["fn"] = c.fn.to_double();
  j["tp_exact"] = c.tp.to_string();
  j["fp_exact"] = c.fp.to_string();
  j["fn_exact"] = c.fn.to_string();
  return j;
}

ordered_json category_metrics_json(const CategoryMetrics& m) {
  ordered_json j;
  j["precision"] = m.precision ? ordered_json(m.precision->to_double()) : ordered_json(nullptr);
  j["recall"] = m.recall ? ordered_json(m.recall->to_double()) : ordered_json(nullptr);
  j["f1"] = m.f1 ? ordered_json(m.f1->to_double()) : ordered_json(nullptr);
  return j;
}

ordered_json metrics_row_json(const MetricsRow& row) {
  ordered_json j;
  j["log"] = row.log;
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    j[std::string(kind_name(static_cast<DeviationKind>(i)))] = category_metrics_json(row.pattern[i]);
  }
  j["conforming"] = category_metrics_json(row.conforming);
  return j;
}

std::string metric_cell_text(const std::optional<Rational>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v->to_double());
  return buf;
}

void append_table_block(std::string& out, const MetricsRow& row) {
  out += row.log + "\n";
  char line[128];
  std::snprintf(line, sizeof(line), "  %-12s %9s %9s %9s\n", "category", "precision", "recall",
                "f1");
  out += line;
  auto emit = [&](std::string_view name, const CategoryMetrics& m) {
    std::snprintf(line, sizeof(line), "  %-12s %9s %9s %9s\n", std::string(name).c_str(),
                  metric_cell_text(m.precision).c_str(), metric_cell_text(m.recall).c_str(),
                  metric_cell_text(m.f1).c_str());
    out += line;
  };
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    emit(kind_name(static_cast<DeviationKind>(i)), row.pattern[i]);
  }
  emit("conforming", row.conforming);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (const char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string csv_cell(const std::optional<Rational>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v->to_double());
  return buf;
}

void append_csv_rows(std::string& out, const MetricsRow& row) {
  auto emit = [&](std::string_view name, const CategoryMetrics& m) {
    out += csv_field(row.log) + "," + std::string(name) + "," + csv_cell(m.precision) + "," +
           csv_cell(m.recall) + "," + csv_cell(m.f1) + "\n";
  };
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    emit(kind_name(static_cast<DeviationKind>(i)), row.pattern[i]);
  }
  emit("conforming", row.conforming);
}

ordered_json category_std_json(const CategoryStd& s) {
  ordered_json j;
  j["precision"] = s.precision ? ordered_json(*s.precision) : ordered_json(nullptr);
  j["recall"] = s.recall ? ordered_json(*s.recall) : ordered_json(nullptr);
  j["f1"] = s.f1 ? ordered_json(*s.f1) : ordered_json(nullptr);
  return j;
}

}  // namespace

ordered_json counts_to_json(const ScoreCounts& counts) {
  ordered_json j;
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    j[std::string(kind_name(static_cast<DeviationKind>(i)))] =
        category_counts_json(counts.pattern[i]);
  }
  j["conforming"] = category_counts_json(counts.conforming);
  return j;
}

ordered_json metrics_to_json(const MetricsReport& report) {
  ordered_json j;
  j["logs"] = ordered_json::array();
  for (const MetricsRow& row : report.per_log) j["logs"].push_back(metrics_row_json(row));
  j["macro"] = metrics_row_json(report.macro);
  return j;
}

ordered_json evaluation_to_json(const Evaluation& evaluation) {
  ordered_json j;
  j["traces"] = evaluation.traces;
  j["parse_failures"] = evaluation.parse_failures;
  j["failure_rate"] = evaluation.failure_rate().to_double();
  j["failed_trace_ids"] = evaluation.failed_trace_ids;
  j["counts"] = counts_to_json(evaluation.totals);
  return j;
}

ordered_json stats_to_json(const DescriptiveStats& stats) {
  ordered_json j;
  j["logs"] = stats.logs;
  j["traces"] = stats.traces;
  j["conforming"] = stats.conforming;
  j["deviating"] = stats.deviating;
  j["deviations"] = stats.deviations;
  j["avg_deviations_per_trace"] = stats.avg_deviations_per_trace();
  j["avg_display"] = stats.avg_display();
  ordered_json per_kind;
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    per_kind[std::string(kind_name(static_cast<DeviationKind>(i)))] = stats.per_kind[i];
  }
  j["per_kind"] = per_kind;
  return j;
}

ordered_json robustness_to_json(const RobustnessReport& report) {
  ordered_json j;
  j["seeds"] = ordered_json::array();
  for (const SeedOutcome& outcome : report.seeds) {
    ordered_json s;
    s["seed"] = outcome.seed;
    s["ok"] = outcome.ok;
    if (!outcome.ok) s["error"] = outcome.error;
    j["seeds"].push_back(s);
  }
  ordered_json std_block;
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    std_block[std::string(kind_name(static_cast<DeviationKind>(i)))] =
        category_std_json(report.pattern[i]);
  }
  std_block["conforming"] = category_std_json(report.conforming);
  j["std"] = std_block;
  return j;
}

ordered_json timing_to_json(const TimingReport& report) {
  ordered_json j;
  if (!report.available) {
    j["available"] = false;
    return j;
  }
  j["kb_population"] = report.kb_population_seconds;
  j["inference"] = report.inference_mean_seconds;
  return j;
}

std::string format_metrics_table(const MetricsReport& report) {
  std::string out;
  for (const MetricsRow& row : report.per_log) {
    append_table_block(out, row);
    out += "\n";
  }
  append_table_block(out, report.macro);
  return out;
}

std::string metrics_to_csv(const MetricsReport& report) {
  std::string out = "log,category,precision,recall,f1\n";
  for (const MetricsRow& row : report.per_log) append_csv_rows(out, row);
  append_csv_rows(out, report.macro);
  return out;
}

std::string format_stats(const DescriptiveStats& stats) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "logs        %8zu\n", stats.logs);
  out += line;
  std::snprintf(line, sizeof(line), "traces      %8zu\n", stats.traces);
  out += line;
  std::snprintf(line, sizeof(line), "conforming  %8zu\n", stats.conforming);
  out += line;
  std::snprintf(line, sizeof(line), "deviating   %8zu\n", stats.deviating);
  out += line;
  std::snprintf(line, sizeof(line), "avg devs    %8s\n", stats.avg_display().c_str());
  out += line;
  for (size_t i = 0; i < kDeviationKindCount; ++i) {
    std::snprintf(line, sizeof(line), "%-11s %8llu\n",
                  std::string(kind_name(static_cast<DeviationKind>(i))).c_str(),
                  static_cast<unsigned long long>(stats.per_kind[i]));
    out += line;
  }
  return out;
}

}  // namespace tracesift
