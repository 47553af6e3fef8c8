#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tracesift/core.hpp"
#include "tracesift/model_io.hpp"

namespace tracesift {

struct InjectionConfig {
  double deviating_share = 0.55;
  int max_deviations_per_trace = 3;
  int fragment_len_min = 1;
  int fragment_len_max = 3;
  int retries_per_trace = 10;
  size_t min_traces = 100;
  uint64_t seed = 0;
  // Restricts the drawn kinds (all five when empty). Lets callers force a
  // kind for focused benchmarks.
  std::vector<DeviationKind> allowed_kinds;
  // Content for Insert and Replace expectations; the model alphabet when
  // empty. Non-empty enables cross-model noise.
  std::vector<Activity> content_alphabet;
};

void validate_config(const InjectionConfig& cfg);

// One trace per model sequence, then seeded uniform duplication up to
// cfg.min_traces. Trace ids are "<model id>/t<index>".
EventLog model_to_log(const ProcessModel& m, const InjectionConfig& cfg);

// Applies one pattern at explicit pre-deviation coordinates. pos_b is
// required for Swap (start of fragment_b) and rejected otherwise.
Trace apply_pattern(const Trace& t, const DeviationPattern& d, size_t pos_a,
                    std::optional<size_t> pos_b = std::nullopt);

// True iff the deviated sequence is not one of the model's desired runs.
bool is_valid_deviation(const Trace& deviated, const ProcessModel& m);

// Re-applies a recorded deviation using its stored post-deviation position.
// For Swap, fragment_b is located at its first occurrence after fragment_a —
// the generator canonicalizes accepted swaps to that convention.
Trace replay_deviation(const Trace& t, const DeviationPattern& d);
Trace replay_deviations(const Trace& desired, const std::vector<DeviationPattern>& ds);

struct TraceInjection {
  std::string trace_id;
  int drawn;     // k sampled from Uniform{1..max}
  int accepted;  // deviations actually applied
  int rejected;  // candidates discarded by validity or geometry
  bool exhausted;
};

struct InjectionStats {
  size_t targeted = 0;
  size_t deviating = 0;  // traces with >= 1 accepted deviation
  uint64_t drawn_total = 0;
  uint64_t accepted_total = 0;
  uint64_t rejected_total = 0;
  size_t exhausted_traces = 0;
  uint64_t per_kind[kDeviationKindCount] = {};
  std::vector<TraceInjection> per_trace;  // targeted traces only, log order

  double realized_share(size_t log_size) const {
    return log_size ? static_cast<double>(deviating) / static_cast<double>(log_size) : 0.0;
  }
};

struct InjectionResult {
  LogBundle bundle;
  InjectionStats stats;
};

// Targets an exact seeded sample of ⌊share·|log|⌋ traces and mutates each
// with up to max_deviations_per_trace validated deviations. Candidates that
// fail validation (or do not fit the trace) are redrawn, kind included,
// until the per-trace retry budget runs out.
InjectionResult inject_deviations(const EventLog& log, const ProcessModel& m,
                                  const InjectionConfig& cfg);

// Convenience: model_to_log + inject_deviations with per-model streams
// derived from cfg.seed, as one call.
InjectionResult generate_bundle(const ProcessModel& m, const InjectionConfig& cfg);

}  // namespace tracesift
