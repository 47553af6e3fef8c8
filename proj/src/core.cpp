#include "tracesift/core.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "tracesift/errors.hpp"

namespace tracesift {

namespace {

std::string trim(std::string s) {
  auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  size_t b = 0;
  size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

}  // namespace

Activity::Activity(std::string label) : label_(trim(std::move(label))) {
  if (label_.empty()) throw SchemaError("activity label empty after trimming");
}

ActivitySeq to_activities(const std::vector<std::string>& labels) {
  ActivitySeq out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.emplace_back(l);
  return out;
}

std::vector<std::string> to_labels(const ActivitySeq& seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (const auto& a : seq) out.push_back(a.label());
  return out;
}

Trace::Trace(std::string trace_id, ActivitySeq acts)
    : id(std::move(trace_id)), activities(std::move(acts)) {
  if (activities.empty()) throw SchemaError("trace '" + id + "' has no activities");
}

EventLog::EventLog(std::string name, std::vector<Trace> traces)
    : name_(std::move(name)), traces_(std::move(traces)) {
  std::set<std::string_view> seen;
  for (const auto& t : traces_) {
    if (!seen.insert(t.id).second)
      throw SchemaError("duplicate trace id '" + t.id + "' in log '" + name_ + "'");
  }
}

ProcessModel::ProcessModel(std::string id, std::vector<ActivitySeq> sequences,
                           std::vector<Activity> declared_alphabet)
    : id_(std::move(id)), sequences_(std::move(sequences)) {
  if (sequences_.empty()) throw SchemaError("model '" + id_ + "' has no sequences");
  for (const auto& s : sequences_) {
    if (s.empty()) throw SchemaError("model '" + id_ + "' contains an empty sequence");
  }
  std::sort(sequences_.begin(), sequences_.end());
  if (std::adjacent_find(sequences_.begin(), sequences_.end()) != sequences_.end())
    throw SchemaError("model '" + id_ + "' contains duplicate sequences");

  std::set<Activity> alpha(declared_alphabet.begin(), declared_alphabet.end());
  for (const auto& s : sequences_) alpha.insert(s.begin(), s.end());
  alphabet_.assign(alpha.begin(), alpha.end());
}

bool ProcessModel::contains(const ActivitySeq& seq) const {
  return std::binary_search(sequences_.begin(), sequences_.end(), seq);
}

std::string_view kind_name(DeviationKind k) {
  switch (k) {
    case DeviationKind::Insert: return "insert";
    case DeviationKind::Skip: return "skip";
    case DeviationKind::Repeat: return "repeat";
    case DeviationKind::Replace: return "replace";
    case DeviationKind::Swap: return "swap";
  }
  return "?";
}

std::string_view kind_constructor(DeviationKind k) {
  switch (k) {
    case DeviationKind::Insert: return "Insert";
    case DeviationKind::Skip: return "Skip";
    case DeviationKind::Repeat: return "Repeat";
    case DeviationKind::Replace: return "Replace";
    case DeviationKind::Swap: return "Swap";
  }
  return "?";
}

std::optional<DeviationKind> kind_from_name(std::string_view name) {
  for (int i = 0; i < kDeviationKindCount; ++i) {
    auto k = static_cast<DeviationKind>(i);
    if (name == kind_name(k) || name == kind_constructor(k)) return k;
  }
  return std::nullopt;
}

DeviationPattern DeviationPattern::insert(ActivitySeq f, std::optional<int> pos) {
  return {DeviationKind::Insert, std::move(f), {}, pos};
}
DeviationPattern DeviationPattern::skip(ActivitySeq f, std::optional<int> pos) {
  return {DeviationKind::Skip, std::move(f), {}, pos};
}
DeviationPattern DeviationPattern::repeat(ActivitySeq f, std::optional<int> pos) {
  return {DeviationKind::Repeat, std::move(f), {}, pos};
}
DeviationPattern DeviationPattern::replace(ActivitySeq original, ActivitySeq replacement,
                                           std::optional<int> pos) {
  return {DeviationKind::Replace, std::move(original), std::move(replacement), pos};
}
DeviationPattern DeviationPattern::swap(ActivitySeq first, ActivitySeq second,
                                        std::optional<int> pos) {
  return {DeviationKind::Swap, std::move(first), std::move(second), pos};
}

std::optional<std::string> validate_pattern(const DeviationPattern& d) {
  if (d.fragment_a.empty()) return "fragment_a empty";
  const bool two_fragment =
      d.kind == DeviationKind::Replace || d.kind == DeviationKind::Swap;
  if (two_fragment) {
    if (d.fragment_b.empty()) return "fragment_b empty";
    if (d.fragment_a == d.fragment_b)
      return d.kind == DeviationKind::Replace ? "replace fragments identical"
                                              : "swap fragments identical";
  } else if (!d.fragment_b.empty()) {
    return "fragment_b not allowed for " + std::string(kind_name(d.kind));
  }
  if (d.position && *d.position < 0) return "position negative";
  return std::nullopt;
}

std::vector<PrimitiveItem> normalize_deviation(const DeviationPattern& d) {
  if (auto bad = validate_pattern(d)) throw ContractError("normalize_deviation: " + *bad);

  std::map<std::pair<PrimitiveKind, Activity>, int> acc;
  auto add = [&acc](PrimitiveKind k, const ActivitySeq& frag) {
    for (const auto& a : frag) ++acc[{k, a}];
  };

  switch (d.kind) {
    case DeviationKind::Insert:
    case DeviationKind::Repeat:
      add(PrimitiveKind::InsertedActivity, d.fragment_a);
      break;
    case DeviationKind::Skip:
      add(PrimitiveKind::SkippedActivity, d.fragment_a);
      break;
    case DeviationKind::Replace:
      add(PrimitiveKind::SkippedActivity, d.fragment_a);
      add(PrimitiveKind::InsertedActivity, d.fragment_b);
      break;
    case DeviationKind::Swap:
      add(PrimitiveKind::SkippedActivity, d.fragment_a);
      add(PrimitiveKind::SkippedActivity, d.fragment_b);
      add(PrimitiveKind::InsertedActivity, d.fragment_a);
      add(PrimitiveKind::InsertedActivity, d.fragment_b);
      break;
  }

  std::vector<PrimitiveItem> out;
  out.reserve(acc.size());
  for (const auto& [key, mult] : acc) out.push_back({key.first, key.second, mult});
  return out;
}

int fragment_activity_count(const DeviationPattern& d) {
  int n = static_cast<int>(d.fragment_a.size());
  if (d.kind == DeviationKind::Replace || d.kind == DeviationKind::Swap)
    n += static_cast<int>(d.fragment_b.size());
  return n;
}

int primitive_mass(const DeviationPattern& d) {
  int n = fragment_activity_count(d);
  return d.kind == DeviationKind::Swap ? 2 * n : n;
}

}  // namespace tracesift
