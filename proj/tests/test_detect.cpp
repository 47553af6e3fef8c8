#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tracesift/detect.hpp"
#include "tracesift/errors.hpp"
#include "tracesift/loggen.hpp"
#include "tracesift/rng.hpp"

using namespace tracesift;

namespace {

ProcessModel demo_model() {
  return ProcessModel("demo", {to_activities({"a", "b", "c", "d"}),
                               to_activities({"a", "c", "b", "d"}),
                               to_activities({"a", "b", "c", "e", "d"})});
}

bool same_patterns(const std::vector<DeviationPattern>& x,
                   const std::vector<DeviationPattern>& y) {
  if (x.size() != y.size()) return false;
  for (size_t i = 0; i < x.size(); ++i)
    if (!(x[i] == y[i])) return false;
  return true;
}

// Captures every prompt it is asked to complete.
struct RecordingBackend final : GenerationBackend {
  std::string n = "recorder";
  std::vector<std::string> prompts;
  std::string reply = "No Deviation.";
  const std::string& name() const override { return n; }
  std::string complete(const GenerationRequest& req) override {
    prompts.push_back(req.prompt);
    return reply;
  }
};

struct ThrowingBackend final : GenerationBackend {
  std::string n = "downed";
  const std::string& name() const override { return n; }
  std::string complete(const GenerationRequest&) override {
    throw BackendError("connection refused");
  }
};

// Independent minimum-edit oracle: plain recursion over (i, j) considering
// match (only on equality), insertion, and deletion.
int oracle_cost(const ActivitySeq& t, const ActivitySeq& r, size_t i, size_t j) {
  if (i == t.size()) return static_cast<int>(r.size() - j);
  if (j == r.size()) return static_cast<int>(t.size() - i);
  int best = 1 + oracle_cost(t, r, i + 1, j);
  best = std::min(best, 1 + oracle_cost(t, r, i, j + 1));
  if (t[i] == r[j]) best = std::min(best, oracle_cost(t, r, i + 1, j + 1));
  return best;
}

}  // namespace

TEST_CASE("parse_output accepts the surface syntax") {
  auto out = parse_output("Swap(['Approve'], ['Ship'])");
  REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
  REQUIRE(out.deviations.size() == 1);
  CHECK(out.deviations[0].kind == DeviationKind::Swap);
  CHECK(out.deviations[0].fragment_a == to_activities({"Approve"}));
  CHECK(out.deviations[0].fragment_b == to_activities({"Ship"}));

  CHECK(parse_output("No Deviation.").kind == ParseOutcome::Kind::Conforming);
  CHECK(parse_output("Assessment: No Deviation. Done.").kind ==
        ParseOutcome::Kind::Conforming);

  out = parse_output("I found Insert(['a']) and also Skip(['b', 'c']) in the trace");
  REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
  REQUIRE(out.deviations.size() == 2);
  CHECK(out.deviations[0].kind == DeviationKind::Insert);
  CHECK(out.deviations[1].kind == DeviationKind::Skip);
  CHECK(out.deviations[1].fragment_a == to_activities({"b", "c"}));

  out = parse_output("Insert ( [ 'a' ,\n'b' ] )");
  REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
  CHECK(out.deviations[0].fragment_a == to_activities({"a", "b"}));

  out = parse_output("Insert(['it\\'s', 'a\\\\b'])");
  REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
  CHECK(out.deviations[0].fragment_a[0].label() == "it's");
  CHECK(out.deviations[0].fragment_a[1].label() == "a\\b");
}

TEST_CASE("constructors win over the conforming sentence") {
  auto out = parse_output("No Deviation. But wait: Insert(['a'])");
  REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
  CHECK(out.deviations.size() == 1);
}

TEST_CASE("keywords in prose are not constructors") {
  CHECK(parse_output("Please do not Skip anything. No Deviation.").kind ==
        ParseOutcome::Kind::Conforming);
  CHECK(parse_output("Insertion(['a']) is not a term. No Deviation.").kind ==
        ParseOutcome::Kind::Conforming);
  CHECK(parse_output("xInsert(['a']) No Deviation.").kind == ParseOutcome::Kind::Conforming);
}

TEST_CASE("parse_output failures") {
  auto fail = [](const std::string& s) {
    auto out = parse_output(s);
    CHECK(out.kind == ParseOutcome::Kind::Failure);
    CHECK(out.offending == s);
    CHECK(out.deviations.empty());
  };
  fail("the trace looks problematic");
  fail("No deviation");        // wrong case, no period
  fail("No Deviation");        // missing period
  fail("Insert([])");          // empty fragment
  fail("Insert(['a'");         // unterminated
  fail("Insert('a')");         // list brackets required
  fail("Replace(['a'])");      // second fragment missing
  fail("Skip(['a'], ['b'])");  // unexpected second fragment
  fail("Swap(['a'], ['a'])");  // identical fragments are invalid
  fail("Insert([''])");        // empty label
  fail("Insert(['   '])");     // label trims to nothing
  fail("Insert(['a',])");      // dangling comma
}

TEST_CASE("render and parse are inverse on fuzzed lists") {
  Rng rng(0xF00D);
  const std::vector<std::string> pool = {"a",     "b",    "c",  "it's", "x\\y",
                                         "a, b?", "[ok]", "d e"};
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<DeviationPattern> ds;
    size_t count = rng.below(4) + 1;
    for (size_t p = 0; p < count; ++p) {
      auto frag = [&](size_t len) {
        ActivitySeq f;
        for (size_t q = 0; q < len; ++q)
          f.push_back(Activity(pool[static_cast<size_t>(rng.below(pool.size()))]));
        return f;
      };
      auto kind = static_cast<DeviationKind>(rng.below(kDeviationKindCount));
      ActivitySeq a = frag(1 + rng.below(3));
      if (kind == DeviationKind::Replace || kind == DeviationKind::Swap) {
        ActivitySeq b = frag(1 + rng.below(3));
        if (a == b) b.push_back(Activity("tail"));
        ds.push_back(DeviationPattern{kind, a, b, std::nullopt});
      } else {
        ds.push_back(DeviationPattern{kind, a, {}, std::nullopt});
      }
    }
    auto out = parse_output(render_deviations(ds));
    REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
    REQUIRE(same_patterns(out.deviations, ds));
  }
}

TEST_CASE("repair flow") {
  GenerationConfig gen;
  SUBCASE("scripted conversion is accepted and flagged") {
    // The one queued reply is served to the repair round itself.
    std::map<std::string, std::vector<std::string>> replies;
    replies["t1"] = {"Insert(['Approve'])"};
    ScriptedBackend backend(std::move(replies));
    auto out = repair_parse("I think 'Approve' was inserted", backend, gen, "t1");
    REQUIRE(out.kind == ParseOutcome::Kind::Deviations);
    CHECK(out.deviations[0].kind == DeviationKind::Insert);
  }
  SUBCASE("still unparseable stays a failure") {
    ScriptedBackend backend({}, "still chatting");
    auto out = repair_parse("free text", backend, gen);
    CHECK(out.kind == ParseOutcome::Kind::Failure);
    CHECK(out.offending == "still chatting");
  }
  SUBCASE("calling repair on a clean reply is a programming error") {
    ScriptedBackend backend({});
    CHECK_THROWS_AS(repair_parse("No Deviation.", backend, gen), std::logic_error);
    CHECK_THROWS_AS(repair_parse("Insert(['a'])", backend, gen), std::logic_error);
  }
  SUBCASE("repair prompt carries the reply and the convention") {
    auto p = repair_prompt("gibberish reply");
    CHECK(p.find("gibberish reply") != std::string::npos);
    CHECK(p.find("No Deviation.") != std::string::npos);
    CHECK(p.find("Insert(['X'])") != std::string::npos);
  }
}

TEST_CASE("detect_trace with deterministic backends") {
  auto m = demo_model();
  InjectionConfig cfg;
  cfg.min_traces = 30;
  cfg.seed = 12;
  auto gen = generate_bundle(m, cfg);
  HashedNgramEmbedder emb(32);
  auto kb = build_kb({m}, cfg, emb);
  auto ctx = extract_log_context(gen.bundle.log, 3, 0.10);

  SUBCASE("oracle reproduces the ground truth of every trace") {
    OracleBackend oracle(gen.bundle);
    for (const auto& t : gen.bundle.log.traces()) {
      auto res = detect_trace(t, kb, ctx, oracle, emb);
      CHECK(res.parse_status == ParseStatus::Strict);
      CHECK(same_patterns(res.deviations, gen.bundle.ground_truth.at(t.id)));
      CHECK(res.retrieved_ids.size() == 5);
    }
  }

  SUBCASE("null backend reports conforming everywhere") {
    NullBackend null;
    const Trace* deviating = nullptr;
    for (const auto& t : gen.bundle.log.traces())
      if (!gen.bundle.ground_truth.at(t.id).empty()) deviating = &t;
    REQUIRE(deviating != nullptr);
    auto res = detect_trace(*deviating, kb, ctx, null, emb);
    CHECK(res.parse_status == ParseStatus::Strict);
    CHECK(res.deviations.empty());
  }

  SUBCASE("no retrieval and empty context yields the zero-shot prompt") {
    RecordingBackend rec;
    DetectOptions opts;
    opts.top_k = 0;
    auto t = gen.bundle.log.traces()[0];
    auto res = detect_trace(t, kb, LogContext{}, rec, emb, opts);
    CHECK(res.retrieved_ids.empty());
    REQUIRE(rec.prompts.size() == 1);
    auto golden = render_prompt(t, LogContext{}, {});
    CHECK(rec.prompts[0] == golden.rendered);
  }

  SUBCASE("embedder mismatch is rejected") {
    HashedNgramEmbedder other(64);
    NullBackend null;
    CHECK_THROWS_AS(detect_trace(gen.bundle.log.traces()[0], kb, ctx, null, other),
                    ContractError);
  }

  SUBCASE("transport failure is a failed result, not an exception") {
    ThrowingBackend downed;
    auto res = detect_trace(gen.bundle.log.traces()[0], kb, ctx, downed, emb);
    CHECK(res.parse_status == ParseStatus::Failed);
    CHECK(res.deviations.empty());
    CHECK(res.error.find("connection refused") != std::string::npos);
  }

  SUBCASE("unparseable reply after repair is flagged, never conforming") {
    ScriptedBackend chatty({}, "the execution seems odd somehow");
    auto res = detect_trace(gen.bundle.log.traces()[0], kb, ctx, chatty, emb);
    CHECK(res.parse_status == ParseStatus::Failed);
    CHECK(res.deviations.empty());
    CHECK_FALSE(res.error.empty());
  }

  SUBCASE("repair round salvages a prose reply") {
    const auto& t = gen.bundle.log.traces()[0];
    std::map<std::string, std::vector<std::string>> replies;
    replies[t.id] = {"something was skipped, maybe b", "Skip(['b'])"};
    ScriptedBackend backend(std::move(replies));
    auto res = detect_trace(t, kb, ctx, backend, emb);
    CHECK(res.parse_status == ParseStatus::Repaired);
    REQUIRE(res.deviations.size() == 1);
    CHECK(res.deviations[0].kind == DeviationKind::Skip);
  }
}

TEST_CASE("detect_log keeps input order under parallelism") {
  auto m = demo_model();
  InjectionConfig cfg;
  cfg.min_traces = 40;
  cfg.seed = 23;
  auto gen = generate_bundle(m, cfg);
  HashedNgramEmbedder emb(32);
  auto kb = build_kb({m}, cfg, emb);
  OracleBackend oracle(gen.bundle);

  LogDetectOptions serial;
  serial.workers = 1;
  auto a = detect_log(gen.bundle.log, kb, oracle, emb, serial);
  LogDetectOptions parallel;
  parallel.workers = 4;
  auto b = detect_log(gen.bundle.log, kb, oracle, emb, parallel);
  REQUIRE(a.size() == gen.bundle.log.size());
  REQUIRE(b.size() == a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].trace_id == gen.bundle.log.traces()[i].id);
    CHECK(b[i].trace_id == a[i].trace_id);
    CHECK(same_patterns(a[i].deviations, b[i].deviations));
    CHECK(a[i].retrieved_ids == b[i].retrieved_ids);
  }

  CHECK(detect_log(EventLog("empty", {}), kb, oracle, emb, serial).empty());
}

TEST_CASE("heuristic alignment examples") {
  std::vector<ActivitySeq> refs = {to_activities({"a", "b"})};
  auto ds = heuristic_reference_detect(Trace("t", to_activities({"a", "x", "b"})), refs);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].kind == DeviationKind::Insert);
  CHECK(ds[0].fragment_a == to_activities({"x"}));

  ds = heuristic_reference_detect(Trace("t", to_activities({"a", "c"})),
                                  {to_activities({"a", "b", "c"})});
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].kind == DeviationKind::Skip);
  CHECK(ds[0].fragment_a == to_activities({"b"}));

  CHECK(heuristic_reference_detect(Trace("t", to_activities({"a", "b"})), refs).empty());

  ds = heuristic_reference_detect(Trace("t", to_activities({"a", "x", "y", "b"})), refs);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].fragment_a == to_activities({"x", "y"}));  // adjacent inserts merge

  ds = heuristic_reference_detect(Trace("t", to_activities({"x", "y"})),
                                  {to_activities({"a"})});
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].kind == DeviationKind::Insert);
  CHECK(ds[0].fragment_a == to_activities({"x", "y"}));
  CHECK(ds[1].kind == DeviationKind::Skip);
  CHECK(ds[1].fragment_a == to_activities({"a"}));

  // Equal-cost references: the first one wins.
  ds = heuristic_reference_detect(
      Trace("t", to_activities({"a"})),
      {to_activities({"a", "b"}), to_activities({"a", "c"})});
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].fragment_a == to_activities({"b"}));

  CHECK_THROWS_AS(heuristic_reference_detect(Trace("t", to_activities({"a"})), {}),
                  ContractError);
}

TEST_CASE("heuristic edit mass matches a brute-force oracle") {
  Rng rng(0xA11C);
  const auto alphabet = to_activities({"p", "q", "r", "s"});
  for (int trial = 0; trial < 400; ++trial) {
    auto draw = [&](size_t min_len) {
      ActivitySeq seq;
      size_t len = min_len + rng.below(8 - min_len);
      for (size_t i = 0; i < len; ++i)
        seq.push_back(alphabet[static_cast<size_t>(rng.below(alphabet.size()))]);
      return seq;
    };
    auto t = draw(1);
    auto r = draw(1);
    auto ds = heuristic_reference_detect(Trace("t", t), {r});
    int mass = 0;
    for (const auto& d : ds) {
      REQUIRE((d.kind == DeviationKind::Insert || d.kind == DeviationKind::Skip));
      REQUIRE_FALSE(d.fragment_a.empty());
      mass += static_cast<int>(d.fragment_a.size());
    }
    CHECK(mass == oracle_cost(t, r, 0, 0));
  }
}

TEST_CASE("heuristic backend wires through detection") {
  auto m = demo_model();
  InjectionConfig cfg;
  cfg.min_traces = 10;
  cfg.seed = 8;
  HashedNgramEmbedder emb(32);
  auto kb = build_kb({m}, cfg, emb);
  HeuristicBackend backend({to_activities({"a", "b"})});
  auto res = detect_trace(Trace("probe", to_activities({"a", "x", "b"})), kb, LogContext{},
                          backend, emb);
  CHECK(res.parse_status == ParseStatus::Strict);
  REQUIRE(res.deviations.size() == 1);
  CHECK(res.deviations[0].kind == DeviationKind::Insert);
  CHECK_THROWS_AS(HeuristicBackend({}), ContractError);
}

TEST_CASE("results files round-trip") {
  auto m = demo_model();
  InjectionConfig cfg;
  cfg.min_traces = 20;
  cfg.seed = 31;
  auto gen = generate_bundle(m, cfg);
  HashedNgramEmbedder emb(32);
  auto kb = build_kb({m}, cfg, emb);
  OracleBackend oracle(gen.bundle);
  LogDetectOptions opts;
  opts.workers = 2;
  auto results = detect_log(gen.bundle.log, kb, oracle, emb, opts);
  results[3].parse_status = ParseStatus::Failed;
  results[3].deviations.clear();
  results[3].error = "synthetic failure";

  auto dir = std::filesystem::temp_directory_path() / "ts_detect_results";
  std::filesystem::create_directories(dir);
  auto file = dir / "results.jsonl";
  write_results_jsonl(results, file);
  write_raw_replies(results, dir / "raw_replies");

  auto back = read_results_jsonl(file);
  REQUIRE(back.size() == results.size());
  for (size_t i = 0; i < results.size(); ++i) {
    CHECK(back[i].trace_id == results[i].trace_id);
    CHECK(back[i].parse_status == results[i].parse_status);
    CHECK(same_patterns(back[i].deviations, results[i].deviations));
    CHECK(back[i].retrieved_ids == results[i].retrieved_ids);
    CHECK(back[i].error == results[i].error);
    auto raw = dir / "raw_replies" / raw_reply_file_name(i, results[i].trace_id);
    std::ifstream in(raw, std::ios::binary);
    REQUIRE(in);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text == results[i].raw_reply);
  }
  std::filesystem::remove_all(dir);
}
