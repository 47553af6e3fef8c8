// Acceptance gate: every release-blocking property in one binary, one
// printed PASS/FAIL line per criterion. Reference answers are computed by
// independent brute-force oracles defined in this file, never by the
// code under test.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tracesift/core.hpp"
#include "tracesift/detect.hpp"
#include "tracesift/embed.hpp"
#include "tracesift/evalx.hpp"
#include "tracesift/fixtures.hpp"
#include "tracesift/kb.hpp"
#include "tracesift/loggen.hpp"
#include "tracesift/model_io.hpp"
#include "tracesift/promptgen.hpp"
#include "tracesift/rng.hpp"

using namespace tracesift;
namespace fs = std::filesystem;
using DP = DeviationPattern;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// One acceptance criterion: collects failures, prints its verdict line.
struct Criterion {
  int id;
  std::string what;
  bool ok = true;
  std::vector<std::string> notes;

  Criterion(int id_, std::string what_) : id(id_), what(std::move(what_)) {}

  void expect(bool cond, const std::string& note) {
    if (cond) return;
    ok = false;
    if (notes.size() < 10) notes.push_back(note);
  }

  void finish() {
    std::printf("criterion %2d: %s - %s\n", id, ok ? "PASS" : "FAIL", what.c_str());
    for (const auto& n : notes) std::printf("              %s\n", n.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, "criterion ", id, ": ", what);
  }
};

ActivitySeq acts(std::initializer_list<const char*> labels) {
  ActivitySeq out;
  for (const char* l : labels) out.emplace_back(l);
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force reference matcher (independent of the scorer): try every
// injective same-kind pairing between ground-truth and predicted patterns,
// force-match the primitive intersection of each pair, then optimally match
// the leftovers bucket by bucket over every ground-truth item subset.

using ItemKey = std::pair<PrimitiveKind, Activity>;
using ItemCounts = std::map<ItemKey, int>;

ItemCounts items_of(const DP& d) {
  ItemCounts out;
  for (const PrimitiveItem& item : normalize_deviation(d)) {
    out[{item.kind, item.activity}] += item.multiplicity;
  }
  return out;
}

Rational best_subset_sum(const std::vector<Rational>& weights, size_t pick, size_t from = 0) {
  if (pick == 0) return Rational(0);
  if (weights.size() - from < pick) return Rational(-1000000);
  if (weights.size() - from == pick) {
    Rational sum;
    for (size_t i = from; i < weights.size(); ++i) sum += weights[i];
    return sum;
  }
  const Rational with = weights[from] + best_subset_sum(weights, pick - 1, from + 1);
  const Rational without = best_subset_sum(weights, pick, from + 1);
  return std::max(with, without);
}

struct OracleState {
  const std::vector<DP>* gt;
  const std::vector<DP>* pred;
  std::vector<ItemCounts> gt_items, pred_items;
  std::vector<int> assignment;
  std::vector<bool> used;
  Rational best;
};

Rational evaluate_assignment(OracleState& s) {
  Rational credit;
  std::map<ItemKey, std::vector<Rational>> gt_units;
  std::map<ItemKey, int> pred_residual;
  std::vector<bool> pred_paired(s.pred->size(), false);

  for (size_t i = 0; i < s.gt->size(); ++i) {
    const Rational unit(1, primitive_mass((*s.gt)[i]));
    ItemCounts residual = s.gt_items[i];
    if (s.assignment[i] >= 0) {
      const size_t j = static_cast<size_t>(s.assignment[i]);
      pred_paired[j] = true;
      ItemCounts pred_left = s.pred_items[j];
      for (auto& [key, count] : residual) {
        auto it = pred_left.find(key);
        if (it == pred_left.end()) continue;
        const int shared = std::min(count, it->second);
        credit += unit * shared;
        count -= shared;
        it->second -= shared;
      }
      for (const auto& [key, count] : pred_left) {
        if (count > 0) pred_residual[key] += count;
      }
    }
    for (const auto& [key, count] : residual) {
      for (int c = 0; c < count; ++c) gt_units[key].push_back(unit);
    }
  }
  for (size_t j = 0; j < s.pred->size(); ++j) {
    if (pred_paired[j]) continue;
    for (const auto& [key, count] : s.pred_items[j]) pred_residual[key] += count;
  }
  for (const auto& [key, units] : gt_units) {
    const auto it = pred_residual.find(key);
    const int available = it == pred_residual.end() ? 0 : it->second;
    const size_t matched = std::min(units.size(), static_cast<size_t>(available));
    if (matched > 0) credit += best_subset_sum(units, matched);
  }
  return credit;
}

void search_assignments(OracleState& s, size_t i) {
  if (i == s.gt->size()) {
    s.best = std::max(s.best, evaluate_assignment(s));
    return;
  }
  s.assignment[i] = -1;
  search_assignments(s, i + 1);
  for (size_t j = 0; j < s.pred->size(); ++j) {
    if (s.used[j] || (*s.pred)[j].kind != (*s.gt)[i].kind) continue;
    s.used[j] = true;
    s.assignment[i] = static_cast<int>(j);
    search_assignments(s, i + 1);
    s.used[j] = false;
  }
  s.assignment[i] = -1;
}

Rational oracle_credit(const std::vector<DP>& gt, const std::vector<DP>& pred) {
  OracleState s;
  s.gt = &gt;
  s.pred = &pred;
  for (const DP& d : gt) s.gt_items.push_back(items_of(d));
  for (const DP& d : pred) s.pred_items.push_back(items_of(d));
  s.assignment.assign(gt.size(), -1);
  s.used.assign(pred.size(), false);
  s.best = Rational(0);
  search_assignments(s, 0);
  return s.best;
}

// ---------------------------------------------------------------------------
// Shared generators

DP random_pattern(Rng& rng, const std::vector<std::string>& alphabet, int max_len) {
  auto frag = [&](int len) {
    ActivitySeq s;
    for (int i = 0; i < len; ++i) s.emplace_back(alphabet[rng.below(alphabet.size())]);
    return s;
  };
  for (;;) {
    const auto kind = static_cast<DeviationKind>(rng.below(kDeviationKindCount));
    const int la = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_len)));
    const int lb = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_len)));
    ActivitySeq a = frag(la);
    if (kind == DeviationKind::Replace || kind == DeviationKind::Swap) {
      ActivitySeq b = frag(lb);
      if (a == b) continue;
      return kind == DeviationKind::Replace ? DP::replace(a, b) : DP::swap(a, b);
    }
    if (kind == DeviationKind::Insert) return DP::insert(a);
    if (kind == DeviationKind::Skip) return DP::skip(a);
    return DP::repeat(a);
  }
}

// Random sequence model: alphabet of the requested size, a handful of
// distinct runs drawn from it.
ProcessModel random_model(Rng& rng, const std::string& id, size_t alphabet_size) {
  std::vector<Activity> alphabet;
  for (size_t i = 0; i < alphabet_size; ++i) {
    alphabet.emplace_back("act" + std::to_string(i) + "-" + id);
  }
  const size_t n_seq = 3 + rng.below(4);
  std::vector<ActivitySeq> sequences;
  for (size_t s = 0; s < n_seq; ++s) {
    const size_t len = 4 + rng.below(5);
    ActivitySeq seq;
    for (size_t i = 0; i < len; ++i) seq.push_back(alphabet[rng.below(alphabet.size())]);
    sequences.push_back(std::move(seq));
  }
  return ProcessModel(id, std::move(sequences), alphabet);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// All multisets of up to max_size patterns from a pool (as index-sorted
// selections, which is exactly one representative per multiset).
std::vector<std::vector<DP>> multisets_up_to(const std::vector<DP>& pool, size_t max_size) {
  std::vector<std::vector<DP>> out{{}};
  std::vector<size_t> pick;
  auto rec = [&](auto&& self, size_t from) -> void {
    if (pick.size() >= max_size) return;
    for (size_t i = from; i < pool.size(); ++i) {
      pick.push_back(i);
      std::vector<DP> inst;
      for (size_t p : pick) inst.push_back(pool[p]);
      out.push_back(std::move(inst));
      self(self, i);
      pick.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

}  // namespace

TEST_CASE("criterion 1") {
  Criterion crit(1, "skip partial credit is exactly 2/3 tp and 1/3 fn in under a millisecond");
  const std::vector<DP> gt{DP::skip(acts({"A", "B", "C"}))};
  const std::vector<DP> pred{DP::skip(acts({"A", "B"}))};

  score_trace(gt, pred);  // warm-up outside the timed call
  const auto start = Clock::now();
  const ScoreCounts counts = score_trace(gt, pred);
  const double elapsed = seconds_since(start);

  const CategoryCounts& skip = counts.of(DeviationKind::Skip);
  crit.expect(skip.tp == Rational(2, 3), "skip tp is " + skip.tp.to_string());
  crit.expect(skip.fn == Rational(1, 3), "skip fn is " + skip.fn.to_string());
  crit.expect(skip.fp == Rational(0), "skip fp is " + skip.fp.to_string());
  crit.expect(elapsed < 0.001, "took " + std::to_string(elapsed) + "s");
  crit.finish();
}

TEST_CASE("criterion 2") {
  Criterion crit(2, "1,000 fuzzed patterns keep identical tp mass under the insert/skip retelling");
  Rng rng(0xACCE0002);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 1000; ++trial) {
    const DP d = random_pattern(rng, alphabet, 3);
    const std::vector<DP> gt{d};

    std::vector<DP> retold;
    for (const PrimitiveItem& item : normalize_deviation(d)) {
      for (int m = 0; m < item.multiplicity; ++m) {
        retold.push_back(item.kind == PrimitiveKind::InsertedActivity
                             ? DP::insert({item.activity})
                             : DP::skip({item.activity}));
      }
    }

    const Rational as_stated = total_tp(score_trace(gt, gt));
    const Rational as_retold = total_tp(score_trace(gt, retold));
    crit.expect(as_stated == as_retold,
                "trial " + std::to_string(trial) + ": " + as_stated.to_string() + " vs " +
                    as_retold.to_string());
    crit.expect(as_retold == Rational(1),
                "trial " + std::to_string(trial) + " retold mass " + as_retold.to_string());
    if (!crit.ok && crit.notes.size() >= 10) break;
  }
  crit.finish();
}

TEST_CASE("criterion 3") {
  Criterion crit(3, "oracle pipeline is perfect and the null pipeline recalls conforming, in time");
  const auto start = Clock::now();

  Rng rng(0xACCE0003);
  std::vector<ProcessModel> models;
  for (int i = 0; i < 20; ++i) {
    models.push_back(random_model(rng, "m" + std::to_string(i), 5 + (i % 11)));
  }
  InjectionConfig cfg;
  cfg.seed = 301;
  const HashedNgramEmbedder embedder(256);
  const KnowledgeBase kb = build_kb(models, cfg, embedder);

  std::vector<LogScore> oracle_logs, null_logs;
  for (const ProcessModel& m : models) {
    const InjectionResult res = generate_bundle(m, cfg);
    LogDetectOptions opts;
    OracleBackend oracle(res.bundle);
    const auto oracle_results = detect_log(res.bundle.log, kb, oracle, embedder, opts);
    oracle_logs.push_back({m.id(), evaluate_results(oracle_results, res.bundle.ground_truth).totals});

    NullBackend null;
    const auto null_results = detect_log(res.bundle.log, kb, null, embedder, opts);
    null_logs.push_back({m.id(), evaluate_results(null_results, res.bundle.ground_truth).totals});
  }

  const MetricsReport oracle_report = aggregate_metrics(oracle_logs);
  auto check_perfect = [&](const MetricsRow& row) {
    auto cell = [&](const CategoryMetrics& m, const std::string& name) {
      if (m.precision) {
        crit.expect(*m.precision == Rational(1), row.log + " " + name + " precision");
      }
      if (m.recall) crit.expect(*m.recall == Rational(1), row.log + " " + name + " recall");
      if (m.f1) crit.expect(*m.f1 == Rational(1), row.log + " " + name + " f1");
    };
    for (int k = 0; k < kDeviationKindCount; ++k) {
      cell(row.of(static_cast<DeviationKind>(k)),
           std::string(kind_name(static_cast<DeviationKind>(k))));
    }
    cell(row.conforming, "conforming");
  };
  for (const MetricsRow& row : oracle_report.per_log) check_perfect(row);
  check_perfect(oracle_report.macro);

  const MetricsReport null_report = aggregate_metrics(null_logs);
  for (const MetricsRow& row : null_report.per_log) {
    crit.expect(row.conforming.recall && *row.conforming.recall == Rational(1),
                row.log + " null conforming recall");
    for (int k = 0; k < kDeviationKindCount; ++k) {
      const CategoryMetrics& m = row.of(static_cast<DeviationKind>(k));
      if (m.recall) {
        crit.expect(*m.recall == Rational(0),
                    row.log + " null " +
                        std::string(kind_name(static_cast<DeviationKind>(k))) + " recall");
      }
    }
  }

  const double elapsed = seconds_since(start);
  crit.expect(elapsed < 60.0, "took " + std::to_string(elapsed) + "s");
  crit.what += " (" + std::to_string(static_cast<int>(elapsed * 1000)) + " ms)";
  crit.finish();
}

TEST_CASE("criterion 4") {
  Criterion crit(4, "1,000-trace generation lands in the target share and draw bands");
  Rng rng(0xACCE0004);
  const ProcessModel m = random_model(rng, "share-model", 9);
  InjectionConfig cfg;
  cfg.seed = 41;
  cfg.min_traces = 1000;
  const InjectionResult res = generate_bundle(m, cfg);

  crit.expect(res.bundle.log.size() == 1000,
              "log size " + std::to_string(res.bundle.log.size()));

  // Recount the share from the bundle itself rather than trusting stats.
  size_t deviating = 0;
  for (const Trace& t : res.bundle.log.traces()) {
    if (!res.bundle.ground_truth.at(t.id).empty()) ++deviating;
  }
  const double share = static_cast<double>(deviating) / 1000.0;
  crit.expect(share >= 0.50 && share <= 0.58, "realized share " + std::to_string(share));
  crit.expect(deviating == res.stats.deviating, "stats disagree with the bundle recount");

  uint64_t drawn = 0;
  for (const TraceInjection& ti : res.stats.per_trace) {
    drawn += static_cast<uint64_t>(ti.drawn);
    crit.expect(ti.drawn >= 1 && ti.drawn <= 3, "drawn outside 1..3");
  }
  crit.expect(res.stats.per_trace.size() == 550,
              "targeted " + std::to_string(res.stats.per_trace.size()));
  const double mean_drawn =
      static_cast<double>(drawn) / static_cast<double>(res.stats.per_trace.size());
  crit.expect(mean_drawn > 2.0 - 0.15 && mean_drawn < 2.0 + 0.15,
              "mean drawn " + std::to_string(mean_drawn));
  crit.finish();
}

TEST_CASE("criterion 5") {
  Criterion crit(5, "recorded deviations replay byte-exactly and leave the desired language");
  Rng rng(0xACCE0005);
  std::vector<ProcessModel> models;
  for (int i = 0; i < 5; ++i) {
    models.push_back(random_model(rng, "replay" + std::to_string(i), 6 + i));
  }

  size_t traces = 0, deviated = 0, violations = 0;
  for (uint64_t seed : {11u, 12u, 13u, 14u}) {
    for (const ProcessModel& m : models) {
      InjectionConfig cfg;
      cfg.seed = seed;
      cfg.min_traces = 600;
      const EventLog base = model_to_log(m, cfg);
      const InjectionResult res = generate_bundle(m, cfg);
      traces += res.bundle.log.size();
      for (size_t i = 0; i < res.bundle.log.size(); ++i) {
        const Trace& out = res.bundle.log.traces()[i];
        const auto& ds = res.bundle.ground_truth.at(out.id);
        if (ds.empty()) continue;
        ++deviated;
        const Trace replayed = replay_deviations(base.traces()[i], ds);
        if (replayed.activities != out.activities || replayed.id != out.id) ++violations;
        if (m.contains(out.activities)) ++violations;
      }
    }
  }
  crit.expect(traces >= 10000, "only " + std::to_string(traces) + " traces generated");
  crit.expect(deviated > 0, "no deviated traces generated");
  crit.expect(violations == 0, std::to_string(violations) + " replay violations");
  crit.what += " (" + std::to_string(traces) + " traces, " + std::to_string(deviated) +
               " deviated)";
  crit.finish();
}

TEST_CASE("criterion 6") {
  Criterion crit(6, "top-k retrieval equals the brute-force ranking, ties and self-queries included");
  const auto start = Clock::now();
  Rng rng(0xACCE0006);
  const std::vector<std::string> pool{"alpha", "beta",  "gamma", "delta", "epsilon",
                                      "zeta",  "omega", "kappa", "sigma", "tau"};
  const HashedNgramEmbedder embedder(256);

  std::vector<KbEntry> entries;
  for (int i = 0; i < 1000; ++i) {
    ActivitySeq seq;
    // A small sequence space forces plenty of exact duplicates, which in
    // turn forces similarity ties.
    const size_t len = 2 + rng.below(3);
    for (size_t p = 0; p < len; ++p) seq.emplace_back(pool[rng.below(4)]);
    Trace t{"e" + std::to_string(i), seq};
    entries.push_back({t, embedder.embed(trace_to_sentence(t)), {}, "retrieval-model"});
  }
  for (int i = 0; i < 3; ++i) {  // unrankable zero-norm entries must be skipped
    Trace t{"zero" + std::to_string(i), acts({"void"})};
    entries.push_back({t, Embedding{std::vector<double>(256, 0.0)}, {}, "retrieval-model"});
  }
  const KnowledgeBase kb(embedder.name(), 256, std::move(entries));

  auto brute_force = [&](const Embedding& q, size_t k) {
    std::vector<RetrievalHit> hits;
    for (size_t i = 0; i < kb.entries().size(); ++i) {
      const Embedding& e = kb.entries()[i].embedding;
      double norm = 0.0;
      for (double v : e.values) norm += v * v;
      if (norm == 0.0) continue;
      hits.push_back({i, cosine(q, e)});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
      if (a.similarity != b.similarity) return a.similarity > b.similarity;
      return a.index < b.index;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
  };

  for (int query = 0; query < 100; ++query) {
    Embedding q;
    if (query % 2 == 0) {
      q = kb.entries()[rng.below(1000)].embedding;  // stored (often duplicated) point
    } else {
      ActivitySeq seq;
      const size_t len = 2 + rng.below(4);
      for (size_t p = 0; p < len; ++p) seq.emplace_back(pool[rng.below(pool.size())]);
      q = embedder.embed(to_sentence(seq));
    }
    const auto expected = brute_force(q, 10);
    const auto got = retrieve_top_k(kb, q, 10);
    bool same = got.size() == expected.size();
    for (size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].index == expected[i].index && got[i].similarity == expected[i].similarity;
    }
    crit.expect(same, "query " + std::to_string(query) + " ranking diverges");
  }

  for (int probe = 0; probe < 20; ++probe) {
    const size_t j = rng.below(1000);
    const auto hits = retrieve_top_k(kb, kb.entries()[j].embedding, 1);
    crit.expect(!hits.empty() && std::abs(hits[0].similarity - 1.0) <= 1e-9,
                "self-similarity off for entry " + std::to_string(j));
  }

  const double elapsed = seconds_since(start);
  crit.expect(elapsed < 5.0, "took " + std::to_string(elapsed) + "s");
  crit.finish();
}

TEST_CASE("criterion 7") {
  Criterion crit(7, "10,000 fuzzed deviation lists survive the render/parse round trip");
  Rng rng(0xACCE0007);
  const std::vector<std::string> pool{"a",       "b",    "it's",       "x\\y", "a, b?",
                                      "[ok]",    "d e",  "Record GR", "No",   "Deviation",
                                      "α-check", "tab\tstop"};
  int successes = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<DP> ds;
    const size_t count = 1 + rng.below(4);
    for (size_t p = 0; p < count; ++p) ds.push_back(random_pattern(rng, pool, 3));
    const ParseOutcome out = parse_output(render_deviations(ds));
    if (out.kind == ParseOutcome::Kind::Deviations && out.deviations == ds) {
      ++successes;
    } else {
      crit.expect(false, "trial " + std::to_string(trial) + " did not round-trip");
    }
  }
  crit.expect(successes == 10000, std::to_string(successes) + "/10000 round-tripped");

  const ParseOutcome conforming = parse_output("No Deviation.");
  crit.expect(conforming.kind == ParseOutcome::Kind::Conforming,
              "\"No Deviation.\" did not parse as conforming");
  crit.expect(parse_output(render_reply({})).kind == ParseOutcome::Kind::Conforming,
              "empty list did not render to a conforming reply");
  crit.finish();
}

TEST_CASE("criterion 8") {
  Criterion crit(8, "greedy credit equals the brute-force optimum on exhaustive families");
  size_t instances = 0;

  auto verify = [&](const std::vector<DP>& gt, const std::vector<DP>& pred) {
    ++instances;
    const Rational greedy = total_tp(score_trace(gt, pred));
    const Rational reference = oracle_credit(gt, pred);
    if (!(greedy == reference)) {
      crit.expect(false, "instance " + std::to_string(instances) + ": greedy " +
                             greedy.to_string() + " vs optimal " + reference.to_string());
    }
  };

  // Family 1: exhaustive over every multiset of up to four patterns per
  // side from an eight-pattern two-letter pool holding all five shapes.
  // The reversed replace/swap orientations are exercised by families 2
  // and 3.
  {
    const Activity a("a"), b("b");
    const std::vector<DP> pool{DP::insert({a}),       DP::insert({b}), DP::skip({a}),
                               DP::skip({b}),         DP::repeat({a}), DP::repeat({b}),
                               DP::replace({a}, {b}), DP::swap({a}, {b})};
    const auto sides = multisets_up_to(pool, 4);
    for (const auto& gt : sides) {
      for (const auto& pred : sides) verify(gt, pred);
    }
  }

  // Family 2: single-activity fragments over the full five-activity
  // alphabet, exhaustive up to two patterns per side.
  {
    std::vector<Activity> alpha;
    for (const char* l : {"a", "b", "c", "d", "e"}) alpha.emplace_back(l);
    std::vector<DP> pool;
    for (const Activity& x : alpha) {
      pool.push_back(DP::insert({x}));
      pool.push_back(DP::skip({x}));
      pool.push_back(DP::repeat({x}));
      for (const Activity& y : alpha) {
        if (x.label() == y.label()) continue;
        pool.push_back(DP::replace({x}, {y}));
        pool.push_back(DP::swap({x}, {y}));
      }
    }
    const auto sides = multisets_up_to(pool, 2);
    for (const auto& gt : sides) {
      for (const auto& pred : sides) {
        verify(gt, pred);
        if (!crit.ok && crit.notes.size() >= 10) break;
      }
      if (!crit.ok && crit.notes.size() >= 10) break;
    }
  }

  // Family 3: randomized four-by-four instances over five activities with
  // fragments up to length two.
  {
    Rng rng(0xACCE0008);
    const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 10000; ++trial) {
      std::vector<DP> gt, pred;
      const size_t ng = rng.below(5), np = rng.below(5);
      for (size_t i = 0; i < ng; ++i) gt.push_back(random_pattern(rng, alphabet, 2));
      for (size_t i = 0; i < np; ++i) pred.push_back(random_pattern(rng, alphabet, 2));
      verify(gt, pred);
    }
  }

  crit.what += " (" + std::to_string(instances) + " instances)";
  crit.finish();
}

TEST_CASE("criterion 9") {
  Criterion crit(9, "the procurement fixture reproduces its published shape exactly");
  const fs::path dir =
      fs::temp_directory_path() / ("tracesift-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const Fixture fx = load_fixture("p2p-shape", dir);
  const DescriptiveStats stats = descriptive_stats({read_bundle(fx.dir / "bundle.json")});
  crit.expect(stats.traces == 58, "traces " + std::to_string(stats.traces));
  crit.expect(stats.conforming == 40, "conforming " + std::to_string(stats.conforming));
  crit.expect(stats.deviating == 18, "deviating " + std::to_string(stats.deviating));
  crit.expect(stats.avg_display() == "0.51", "avg " + stats.avg_display());
  const uint64_t expected_per_kind[] = {6, 5, 12, 3, 4};
  for (int k = 0; k < kDeviationKindCount; ++k) {
    crit.expect(stats.per_kind[k] == expected_per_kind[k],
                std::string(kind_name(static_cast<DeviationKind>(k))) + " count " +
                    std::to_string(stats.per_kind[k]));
  }
  fs::remove_all(dir);
  crit.finish();
}

TEST_CASE("criterion 10") {
  Criterion crit(10, "seeds {1,2,3} report zero spread and same-seed artifacts are bitwise equal");
  Rng rng(0xACCE000A);
  std::vector<ProcessModel> models;
  for (int i = 0; i < 3; ++i) {
    models.push_back(random_model(rng, "robust" + std::to_string(i), 7));
  }
  const HashedNgramEmbedder embedder(256);

  const RobustnessReport report = robustness_run({1, 2, 3}, [&](uint64_t seed) {
    InjectionConfig cfg;
    cfg.seed = seed;
    ScoreCounts totals;
    const KnowledgeBase kb = build_kb(models, cfg, embedder);
    for (const ProcessModel& m : models) {
      const InjectionResult res = generate_bundle(m, cfg);
      OracleBackend oracle(res.bundle);
      LogDetectOptions opts;
      const auto results = detect_log(res.bundle.log, kb, oracle, embedder, opts);
      totals += evaluate_results(results, res.bundle.ground_truth).totals;
    }
    return totals;
  });

  for (const SeedOutcome& outcome : report.seeds) {
    crit.expect(outcome.ok, "seed " + std::to_string(outcome.seed) + ": " + outcome.error);
  }
  auto check_cell = [&](const CategoryStd& cell, const std::string& name) {
    auto zero = [&](const std::optional<double>& value, const char* metric) {
      if (value) {
        crit.expect(*value == 0.0, name + " " + metric + " std " + std::to_string(*value));
      }
    };
    zero(cell.precision, "precision");
    zero(cell.recall, "recall");
    zero(cell.f1, "f1");
  };
  for (int k = 0; k < kDeviationKindCount; ++k) {
    check_cell(report.of(static_cast<DeviationKind>(k)),
               std::string(kind_name(static_cast<DeviationKind>(k))));
  }
  check_cell(report.conforming, "conforming");
  crit.expect(report.conforming.f1.has_value(), "conforming f1 spread is absent");

  // Bitwise stability of the persisted artifacts.
  const fs::path dir =
      fs::temp_directory_path() / ("tracesift-accept10-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  InjectionConfig cfg;
  cfg.seed = 1;
  save_kb(build_kb(models, cfg, embedder), dir / "kb-a.tskb");
  save_kb(build_kb(models, cfg, embedder), dir / "kb-b.tskb");
  crit.expect(slurp(dir / "kb-a.tskb") == slurp(dir / "kb-b.tskb"), "kb files differ");
  write_bundle(generate_bundle(models[0], cfg).bundle, dir / "bundle-a.json");
  write_bundle(generate_bundle(models[0], cfg).bundle, dir / "bundle-b.json");
  crit.expect(slurp(dir / "bundle-a.json") == slurp(dir / "bundle-b.json"), "bundles differ");
  fs::remove_all(dir);
  crit.finish();
}

TEST_CASE("criterion 11") {
  Criterion crit(11, "knowledge-base population and heuristic detection stay inside their budgets");
  Rng rng(0xACCE000B);
  std::vector<ProcessModel> models;
  for (int i = 0; i < 100; ++i) {
    models.push_back(random_model(rng, "perf" + std::to_string(i), 5 + (i % 11)));
  }
  InjectionConfig cfg;
  cfg.seed = 111;

  const HashedNgramEmbedder embedder(256);
  const auto kb_start = Clock::now();
  const KnowledgeBase kb = build_kb(models, cfg, embedder);
  const double kb_elapsed = seconds_since(kb_start);
  crit.expect(kb.entries().size() >= 10000,
              "only " + std::to_string(kb.entries().size()) + " entries");
  crit.expect(kb_elapsed < 60.0, "population took " + std::to_string(kb_elapsed) + "s");

  InjectionConfig log_cfg;
  log_cfg.seed = 112;
  log_cfg.min_traces = 1000;
  const InjectionResult res = generate_bundle(models[0], log_cfg);
  HeuristicBackend heuristic(models[0].sequences());
  LogDetectOptions opts;
  const auto detect_start = Clock::now();
  const auto results = detect_log(res.bundle.log, kb, heuristic, embedder, opts);
  const double detect_elapsed = seconds_since(detect_start);
  crit.expect(results.size() == 1000, "detector returned " + std::to_string(results.size()));
  crit.expect(detect_elapsed < 30.0, "detection took " + std::to_string(detect_elapsed) + "s");

  char timing[96];
  std::snprintf(timing, sizeof timing, " (population %.1fs, detection %.1fs)", kb_elapsed,
                detect_elapsed);
  crit.what += timing;
  crit.finish();
}

TEST_CASE("criterion 12") {
  Criterion crit(12, "the heuristic backend reaches F1 >= 0.9 on single-activity inserts and skips");
  Rng rng(0xACCE000C);
  const ProcessModel m = random_model(rng, "bench", 8);
  InjectionConfig cfg;
  cfg.seed = 121;
  cfg.min_traces = 600;
  cfg.max_deviations_per_trace = 1;
  cfg.fragment_len_max = 1;
  cfg.allowed_kinds = {DeviationKind::Insert, DeviationKind::Skip};
  const InjectionResult res = generate_bundle(m, cfg);

  const HashedNgramEmbedder embedder(256);
  const KnowledgeBase kb = build_kb({m}, cfg, embedder);
  HeuristicBackend heuristic(m.sequences());
  LogDetectOptions opts;
  const auto results = detect_log(res.bundle.log, kb, heuristic, embedder, opts);
  const Evaluation ev = evaluate_results(results, res.bundle.ground_truth);
  const MetricsReport report = aggregate_metrics({{m.id(), ev.totals}});

  for (DeviationKind kind : {DeviationKind::Insert, DeviationKind::Skip}) {
    const CategoryMetrics& cell = report.per_log[0].of(kind);
    const std::string name(kind_name(kind));
    crit.expect(cell.f1.has_value(), name + " f1 undefined");
    if (cell.f1) {
      crit.expect(cell.f1->to_double() >= 0.9,
                  name + " f1 " + std::to_string(cell.f1->to_double()));
      char detail[64];
      std::snprintf(detail, sizeof detail, ", %s f1 %.3f", name.c_str(), cell.f1->to_double());
      crit.what += detail;
    }
  }
  crit.finish();
}
