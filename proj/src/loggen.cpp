#include "tracesift/loggen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tracesift/errors.hpp"
#include "tracesift/rng.hpp"

namespace tracesift {

namespace {

// Independent deterministic streams for the two generation phases of one
// model, both derived from the master seed.
uint64_t model_stream(const std::string& model_id, const char* phase, uint64_t seed) {
  return fnv1a64(phase, fnv1a64(model_id)) ^ seed;
}

bool occurrence_at(const std::vector<Activity>& seq, const std::vector<Activity>& frag,
                   size_t pos) {
  if (pos + frag.size() > seq.size()) return false;
  return std::equal(frag.begin(), frag.end(), seq.begin() + static_cast<ptrdiff_t>(pos));
}

// Earliest occurrence of frag at index >= from, or nullopt.
std::optional<size_t> find_occurrence(const std::vector<Activity>& seq,
                                      const std::vector<Activity>& frag, size_t from) {
  if (frag.empty() || frag.size() > seq.size()) return std::nullopt;
  for (size_t p = from; p + frag.size() <= seq.size(); ++p) {
    if (occurrence_at(seq, frag, p)) return p;
  }
  return std::nullopt;
}

std::vector<Activity> splice(const std::vector<Activity>& seq, size_t cut_at,
                             size_t cut_len, const std::vector<Activity>& put) {
  std::vector<Activity> out;
  out.reserve(seq.size() - cut_len + put.size());
  out.insert(out.end(), seq.begin(), seq.begin() + static_cast<ptrdiff_t>(cut_at));
  out.insert(out.end(), put.begin(), put.end());
  out.insert(out.end(), seq.begin() + static_cast<ptrdiff_t>(cut_at + cut_len), seq.end());
  return out;
}

}  // namespace

void validate_config(const InjectionConfig& cfg) {
  if (!(cfg.deviating_share >= 0.0 && cfg.deviating_share <= 1.0))
    throw ContractError("deviating_share outside [0,1]");
  if (cfg.max_deviations_per_trace < 1)
    throw ContractError("max_deviations_per_trace must be >= 1");
  if (cfg.fragment_len_min < 1 || cfg.fragment_len_max < cfg.fragment_len_min)
    throw ContractError("fragment length bounds invalid");
  if (cfg.retries_per_trace < 0) throw ContractError("retries_per_trace negative");
}

EventLog model_to_log(const ProcessModel& m, const InjectionConfig& cfg) {
  validate_config(cfg);
  const auto& seqs = m.sequences();
  std::vector<Trace> traces;
  auto add = [&](const ActivitySeq& seq) {
    traces.push_back(Trace{m.id() + "/t" + std::to_string(traces.size()), seq});
  };
  for (const auto& s : seqs) add(s);
  Rng rng(model_stream(m.id(), "dup", cfg.seed));
  while (traces.size() < cfg.min_traces) {
    add(seqs[static_cast<size_t>(rng.below(seqs.size()))]);
  }
  return EventLog(m.id(), std::move(traces));
}

Trace apply_pattern(const Trace& t, const DeviationPattern& d, size_t pos_a,
                    std::optional<size_t> pos_b) {
  if (auto bad = validate_pattern(d)) throw ContractError("invalid pattern: " + *bad);
  const auto& seq = t.activities;
  if (d.kind != DeviationKind::Swap && pos_b.has_value())
    throw ContractError("pos_b only valid for swap");
  switch (d.kind) {
    case DeviationKind::Insert: {
      if (pos_a > seq.size()) throw ContractError("insert position out of range");
      return Trace{t.id, splice(seq, pos_a, 0, d.fragment_a)};
    }
    case DeviationKind::Skip: {
      if (!occurrence_at(seq, d.fragment_a, pos_a))
        throw ContractError("fragment_a not found at position");
      if (d.fragment_a.size() >= seq.size())
        throw ContractError("skip would empty the trace");
      return Trace{t.id, splice(seq, pos_a, d.fragment_a.size(), {})};
    }
    case DeviationKind::Repeat: {
      if (!occurrence_at(seq, d.fragment_a, pos_a))
        throw ContractError("fragment_a not found at position");
      return Trace{t.id, splice(seq, pos_a + d.fragment_a.size(), 0, d.fragment_a)};
    }
    case DeviationKind::Replace: {
      if (!occurrence_at(seq, d.fragment_a, pos_a))
        throw ContractError("fragment_a not found at position");
      return Trace{t.id, splice(seq, pos_a, d.fragment_a.size(), d.fragment_b)};
    }
    case DeviationKind::Swap: {
      if (!pos_b.has_value()) throw ContractError("swap requires pos_b");
      size_t pa = pos_a, pb = *pos_b;
      const auto *fa = &d.fragment_a, *fb = &d.fragment_b;
      if (pb < pa) {
        std::swap(pa, pb);
        std::swap(fa, fb);
      }
      if (!occurrence_at(seq, *fa, pa) || !occurrence_at(seq, *fb, pb))
        throw ContractError("fragment not found at position");
      if (pa + fa->size() > pb) throw ContractError("swap fragments overlap");
      auto out = splice(seq, pb, fb->size(), *fa);
      out = splice(out, pa, fa->size(), *fb);
      return Trace{t.id, std::move(out)};
    }
  }
  throw ContractError("unknown deviation kind");
}

bool is_valid_deviation(const Trace& deviated, const ProcessModel& m) {
  return !m.contains(deviated.activities);
}

Trace replay_deviation(const Trace& t, const DeviationPattern& d) {
  if (!d.position.has_value()) throw ContractError("replay requires a recorded position");
  size_t p = static_cast<size_t>(*d.position);
  switch (d.kind) {
    case DeviationKind::Insert:
    case DeviationKind::Skip:
    case DeviationKind::Replace:
      return apply_pattern(t, d, p);
    case DeviationKind::Repeat: {
      // Recorded position is the duplicate block, one fragment after the
      // original occurrence.
      if (p < d.fragment_a.size()) throw ContractError("repeat position before fragment");
      return apply_pattern(t, d, p - d.fragment_a.size());
    }
    case DeviationKind::Swap: {
      auto q = find_occurrence(t.activities, d.fragment_b, p + d.fragment_a.size());
      if (!q) throw ContractError("fragment_b not found after fragment_a");
      return apply_pattern(t, d, p, q);
    }
  }
  throw ContractError("unknown deviation kind");
}

Trace replay_deviations(const Trace& desired, const std::vector<DeviationPattern>& ds) {
  Trace cur = desired;
  for (const auto& d : ds) cur = replay_deviation(cur, d);
  return cur;
}

namespace {

struct Candidate {
  DeviationPattern pattern;  // position filled in, post-deviation coordinates
  std::vector<Activity> next;
};

// Draws one candidate mutation for the current sequence. Returns nullopt
// when the drawn geometry cannot fit (still consumes the draws).
std::optional<Candidate> draw_candidate(Rng& rng, const std::vector<Activity>& seq,
                                        const std::vector<DeviationKind>& kinds,
                                        const std::vector<Activity>& content,
                                        const InjectionConfig& cfg) {
  const size_t n = seq.size();
  auto frag_len = [&]() {
    return static_cast<size_t>(cfg.fragment_len_min) +
           static_cast<size_t>(rng.below(
               static_cast<uint64_t>(cfg.fragment_len_max - cfg.fragment_len_min + 1)));
  };
  auto fresh = [&](size_t len) {
    std::vector<Activity> f;
    f.reserve(len);
    for (size_t i = 0; i < len; ++i)
      f.push_back(content[static_cast<size_t>(rng.below(content.size()))]);
    return f;
  };
  auto slice = [&](size_t pos, size_t len) {
    return std::vector<Activity>(seq.begin() + static_cast<ptrdiff_t>(pos),
                                 seq.begin() + static_cast<ptrdiff_t>(pos + len));
  };
  DeviationKind kind = kinds[static_cast<size_t>(rng.below(kinds.size()))];
  switch (kind) {
    case DeviationKind::Insert: {
      auto frag = fresh(frag_len());
      size_t pos = static_cast<size_t>(rng.below(n + 1));
      Candidate c{DeviationPattern::insert(frag, static_cast<int>(pos)),
                  splice(seq, pos, 0, frag)};
      return c;
    }
    case DeviationKind::Skip: {
      size_t len = frag_len();
      if (len >= n) return std::nullopt;  // no occurrence, or would empty
      size_t pos = static_cast<size_t>(rng.below(n - len + 1));
      Candidate c{DeviationPattern::skip(slice(pos, len), static_cast<int>(pos)),
                  splice(seq, pos, len, {})};
      return c;
    }
    case DeviationKind::Repeat: {
      size_t len = frag_len();
      if (len > n) return std::nullopt;
      size_t pos = static_cast<size_t>(rng.below(n - len + 1));
      auto frag = slice(pos, len);
      // Recorded position points at the duplicate block.
      Candidate c{DeviationPattern::repeat(frag, static_cast<int>(pos + len)),
                  splice(seq, pos + len, 0, frag)};
      return c;
    }
    case DeviationKind::Replace: {
      size_t old_len = frag_len();
      if (old_len > n) return std::nullopt;
      size_t pos = static_cast<size_t>(rng.below(n - old_len + 1));
      auto old_frag = slice(pos, old_len);
      auto new_frag = fresh(frag_len());
      if (old_frag == new_frag) return std::nullopt;
      Candidate c{DeviationPattern::replace(old_frag, new_frag, static_cast<int>(pos)),
                  splice(seq, pos, old_len, new_frag)};
      return c;
    }
    case DeviationKind::Swap: {
      size_t la = frag_len();
      size_t lb = frag_len();
      if (la + lb > n) return std::nullopt;
      size_t pa = static_cast<size_t>(rng.below(n - la + 1));
      std::vector<size_t> starts;  // non-overlapping starts for the second fragment
      for (size_t p = 0; p + lb <= n; ++p) {
        if (p + lb <= pa || p >= pa + la) starts.push_back(p);
      }
      if (starts.empty()) return std::nullopt;
      size_t pb = starts[static_cast<size_t>(rng.below(starts.size()))];
      size_t first = std::min(pa, pb), second = std::max(pa, pb);
      size_t first_len = (pa < pb) ? la : lb;
      auto frag_first = slice(first, first_len);
      auto frag_second = slice(second, (pa < pb) ? lb : la);
      if (frag_first == frag_second) return std::nullopt;
      // Canonical form: act on the first occurrence of the second
      // fragment's content after the first fragment, so a left-to-right
      // replay reproduces the exact mutation. The drawn occurrence
      // qualifies, so the search cannot fail.
      auto q = find_occurrence(seq, frag_second, first + first_len);
      if (!q) return std::nullopt;
      auto next = splice(seq, *q, frag_second.size(), frag_first);
      next = splice(next, first, first_len, frag_second);
      Candidate c{DeviationPattern::swap(frag_first, frag_second, static_cast<int>(first)),
                  std::move(next)};
      return c;
    }
  }
  return std::nullopt;
}

}  // namespace

InjectionResult inject_deviations(const EventLog& log, const ProcessModel& m,
                                  const InjectionConfig& cfg) {
  validate_config(cfg);
  for (const auto& t : log.traces()) {
    if (!m.contains(t.activities))
      throw ContractError("log trace " + t.id + " is not a desired run of the model");
  }
  std::vector<DeviationKind> kinds = cfg.allowed_kinds;
  if (kinds.empty()) {
    kinds = {DeviationKind::Insert, DeviationKind::Skip, DeviationKind::Repeat,
             DeviationKind::Replace, DeviationKind::Swap};
  } else {
    std::sort(kinds.begin(), kinds.end());
    kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
  }
  const std::vector<Activity>& content =
      cfg.content_alphabet.empty() ? m.alphabet() : cfg.content_alphabet;
  if (content.empty()) throw ContractError("content alphabet empty");

  std::vector<Trace> traces = log.traces();
  std::map<std::string, std::vector<DeviationPattern>> gt;
  for (const auto& t : traces) {
    if (!gt.emplace(t.id, std::vector<DeviationPattern>{}).second)
      throw ContractError("duplicate trace id " + t.id);
  }

  InjectionStats stats;
  const size_t n = traces.size();
  const size_t target =
      static_cast<size_t>(std::floor(cfg.deviating_share * static_cast<double>(n)));
  Rng rng(model_stream(m.id(), "inj", cfg.seed));
  std::vector<size_t> picks = rng.sample_indices(n, target);
  stats.targeted = picks.size();

  for (size_t idx : picks) {
    Trace& trace = traces[idx];
    TraceInjection ti{trace.id,
                      1 + static_cast<int>(rng.below(
                              static_cast<uint64_t>(cfg.max_deviations_per_trace))),
                      0, 0, false};
    std::vector<DeviationPattern> accepted;
    std::vector<Activity> cur = trace.activities;
    while (ti.accepted < ti.drawn) {
      if (ti.rejected >= cfg.retries_per_trace) {
        ti.exhausted = true;
        break;
      }
      auto cand = draw_candidate(rng, cur, kinds, content, cfg);
      if (cand && !m.contains(cand->next)) {
        cur = std::move(cand->next);
        stats.per_kind[static_cast<size_t>(cand->pattern.kind)]++;
        accepted.push_back(std::move(cand->pattern));
        ti.accepted++;
      } else {
        ti.rejected++;
      }
    }
    stats.drawn_total += static_cast<uint64_t>(ti.drawn);
    stats.accepted_total += static_cast<uint64_t>(ti.accepted);
    stats.rejected_total += static_cast<uint64_t>(ti.rejected);
    if (ti.exhausted) stats.exhausted_traces++;
    if (!accepted.empty()) {
      stats.deviating++;
      trace.activities = std::move(cur);
      gt[trace.id] = std::move(accepted);
    }
    stats.per_trace.push_back(std::move(ti));
  }
  return InjectionResult{LogBundle(EventLog(log.name(), std::move(traces)), std::move(gt)),
                         std::move(stats)};
}

InjectionResult generate_bundle(const ProcessModel& m, const InjectionConfig& cfg) {
  return inject_deviations(model_to_log(m, cfg), m, cfg);
}

}  // namespace tracesift
