#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tracesift {

// A named process step. Labels are trimmed on construction, must be
// non-empty afterwards, and compare case-sensitively.
class Activity {
 public:
  explicit Activity(std::string label);
  const std::string& label() const { return label_; }
  bool operator==(const Activity&) const = default;
  std::strong_ordering operator<=>(const Activity&) const = default;

 private:
  std::string label_;
};

using ActivitySeq = std::vector<Activity>;

ActivitySeq to_activities(const std::vector<std::string>& labels);
std::vector<std::string> to_labels(const ActivitySeq& seq);

// One observed process execution.
struct Trace {
  std::string id;
  ActivitySeq activities;  // never empty

  Trace(std::string trace_id, ActivitySeq acts);
};

// A multiset of traces; ids are unique, activity sequences may repeat.
class EventLog {
 public:
  EventLog(std::string name, std::vector<Trace> traces);

  const std::string& name() const { return name_; }
  const std::vector<Trace>& traces() const { return traces_; }
  size_t size() const { return traces_.size(); }

 private:
  std::string name_;
  std::vector<Trace> traces_;
};

// Desired behavior as a finite set of activity sequences. Sequences are
// stored sorted and duplicate-free; the alphabet covers every activity that
// occurs in them plus any explicitly declared extras.
class ProcessModel {
 public:
  ProcessModel(std::string id, std::vector<ActivitySeq> sequences,
               std::vector<Activity> declared_alphabet = {});

  const std::string& id() const { return id_; }
  const std::vector<ActivitySeq>& sequences() const { return sequences_; }
  const std::vector<Activity>& alphabet() const { return alphabet_; }
  bool contains(const ActivitySeq& seq) const;

 private:
  std::string id_;
  std::vector<ActivitySeq> sequences_;  // sorted, unique
  std::vector<Activity> alphabet_;      // sorted, unique
};

enum class DeviationKind : uint8_t { Insert, Skip, Repeat, Replace, Swap };
inline constexpr int kDeviationKindCount = 5;

// "insert" / "skip" / ... — used in files and reports.
std::string_view kind_name(DeviationKind k);
// "Insert" / "Skip" / ... — used in the reply surface syntax.
std::string_view kind_constructor(DeviationKind k);
std::optional<DeviationKind> kind_from_name(std::string_view name);

// One undesired-behavior claim over contiguous trace fragments.
// fragment_b is meaningful only for Replace (what ran instead of
// fragment_a) and Swap (the second exchanged fragment). `position` is bookkeeping written
// by the generator: a zero-based index into the post-deviation trace (for
// Skip, the gap where the removed fragment would have started). It is
// deliberately excluded from equality.
struct DeviationPattern {
  DeviationKind kind;
  ActivitySeq fragment_a;
  ActivitySeq fragment_b;
  std::optional<int> position;

  bool operator==(const DeviationPattern& o) const {
    return kind == o.kind && fragment_a == o.fragment_a && fragment_b == o.fragment_b;
  }

  static DeviationPattern insert(ActivitySeq f, std::optional<int> pos = {});
  static DeviationPattern skip(ActivitySeq f, std::optional<int> pos = {});
  static DeviationPattern repeat(ActivitySeq f, std::optional<int> pos = {});
  static DeviationPattern replace(ActivitySeq original, ActivitySeq replacement,
                                  std::optional<int> pos = {});
  static DeviationPattern swap(ActivitySeq first, ActivitySeq second,
                               std::optional<int> pos = {});
};

// Returns the first violated invariant as a message, or nullopt if valid.
std::optional<std::string> validate_pattern(const DeviationPattern& d);

enum class PrimitiveKind : uint8_t { InsertedActivity, SkippedActivity };

struct PrimitiveItem {
  PrimitiveKind kind;
  Activity activity;
  int multiplicity;  // >= 1

  bool operator==(const PrimitiveItem&) const = default;
};

// Reduces a pattern to its insert/skip reading: repeats are extra
// insertions, a replace skips the executed fragment and inserts the
// expected one, and a swap both skips and inserts every affected activity
// (each occurrence once on each side). Result is aggregated by
// (kind, activity) and sorted for determinism.
std::vector<PrimitiveItem> normalize_deviation(const DeviationPattern& d);

// Total fragment activity occurrences: |a| for single-fragment kinds,
// |a| + |b| for Replace and Swap.
int fragment_activity_count(const DeviationPattern& d);

// Sum of normalized multiplicities; equals fragment_activity_count except
// for Swap where every activity appears on both primitive sides.
int primitive_mass(const DeviationPattern& d);

}  // namespace tracesift
