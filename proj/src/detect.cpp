#include "tracesift/detect.hpp"

#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "tracesift/errors.hpp"

namespace tracesift {

std::string_view parse_status_name(ParseStatus s) {
  switch (s) {
    case ParseStatus::Strict: return "strict";
    case ParseStatus::Repaired: return "repaired";
    case ParseStatus::Failed: return "failed";
  }
  return "?";
}

ParseStatus parse_status_from_name(std::string_view name) {
  if (name == "strict") return ParseStatus::Strict;
  if (name == "repaired") return ParseStatus::Repaired;
  if (name == "failed") return ParseStatus::Failed;
  throw ContractError("unknown parse status '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

struct Scanner {
  const std::string& s;
  size_t i;

  void ws() {
    while (i < s.size() && is_space(s[i])) ++i;
  }
  bool eat(char c) {
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
};

// 'label' with backslash escapes; nullopt on malformed or unterminated.
std::optional<std::string> quoted_label(Scanner& sc) {
  sc.ws();
  if (!sc.eat('\'')) return std::nullopt;
  std::string out;
  while (sc.i < sc.s.size()) {
    char c = sc.s[sc.i++];
    if (c == '\\') {
      if (sc.i >= sc.s.size()) return std::nullopt;
      out += sc.s[sc.i++];
    } else if (c == '\'') {
      return out;
    } else {
      out += c;
    }
  }
  return std::nullopt;
}

// ['a', 'b'] with at least one element.
std::optional<ActivitySeq> activity_list(Scanner& sc) {
  sc.ws();
  if (!sc.eat('[')) return std::nullopt;
  ActivitySeq seq;
  auto first = quoted_label(sc);
  if (!first) return std::nullopt;
  seq.push_back(Activity(*first));
  while (true) {
    sc.ws();
    if (sc.eat(']')) return seq;
    if (!sc.eat(',')) return std::nullopt;
    auto next = quoted_label(sc);
    if (!next) return std::nullopt;
    seq.push_back(Activity(*next));
  }
}

std::optional<DeviationKind> constructor_kind(const std::string& word) {
  if (word == "Insert") return DeviationKind::Insert;
  if (word == "Skip") return DeviationKind::Skip;
  if (word == "Repeat") return DeviationKind::Repeat;
  if (word == "Replace") return DeviationKind::Replace;
  if (word == "Swap") return DeviationKind::Swap;
  return std::nullopt;
}

}  // namespace

ParseOutcome parse_output(const std::string& reply) {
  std::vector<DeviationPattern> ds;
  size_t i = 0;
  while (i < reply.size()) {
    if (!is_alpha(reply[i]) || (i > 0 && is_word(reply[i - 1]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < reply.size() && is_word(reply[j])) ++j;
    auto kind = constructor_kind(reply.substr(i, j - i));
    if (!kind) {
      i = j;
      continue;
    }
    Scanner sc{reply, j};
    sc.ws();
    if (!sc.eat('(')) {  // keyword used as prose
      i = j;
      continue;
    }
    // From here on the constructor must be complete and well-formed.
    try {
      auto frag_a = activity_list(sc);
      if (!frag_a) return ParseOutcome::failure(reply);
      ActivitySeq frag_b;
      if (*kind == DeviationKind::Replace || *kind == DeviationKind::Swap) {
        sc.ws();
        if (!sc.eat(',')) return ParseOutcome::failure(reply);
        auto second = activity_list(sc);
        if (!second) return ParseOutcome::failure(reply);
        frag_b = std::move(*second);
      }
      sc.ws();
      if (!sc.eat(')')) return ParseOutcome::failure(reply);
      DeviationPattern d{*kind, std::move(*frag_a), std::move(frag_b), std::nullopt};
      if (validate_pattern(d)) return ParseOutcome::failure(reply);
      ds.push_back(std::move(d));
      i = sc.i;
    } catch (const std::exception&) {  // e.g. an all-whitespace label
      return ParseOutcome::failure(reply);
    }
  }
  if (!ds.empty()) return ParseOutcome::deviations_of(std::move(ds));
  if (reply.find("No Deviation.") != std::string::npos) return ParseOutcome::conforming();
  return ParseOutcome::failure(reply);
}

namespace {

std::string escaped_label(const Activity& a) {
  std::string out = "'";
  for (char c : a.label()) {
    if (c == '\\' || c == '\'') out += '\\';
    out += c;
  }
  out += '\'';
  return out;
}

std::string bracket_list(const ActivitySeq& frag) {
  std::string out = "[";
  for (size_t i = 0; i < frag.size(); ++i) {
    if (i) out += ", ";
    out += escaped_label(frag[i]);
  }
  out += "]";
  return out;
}

}  // namespace

std::string render_deviations(const std::vector<DeviationPattern>& ds) {
  std::string out;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (i) out += ", ";
    const auto& d = ds[i];
    out += kind_constructor(d.kind);
    out += "(";
    out += bracket_list(d.fragment_a);
    if (d.kind == DeviationKind::Replace || d.kind == DeviationKind::Swap) {
      out += ", ";
      out += bracket_list(d.fragment_b);
    }
    out += ")";
  }
  return out;
}

std::string render_reply(const std::vector<DeviationPattern>& ds) {
  return ds.empty() ? std::string("No Deviation.") : render_deviations(ds);
}

std::string repair_prompt(const std::string& raw_reply) {
  return
      "The text below assesses one process execution for undesired behavior. "
      "Convert the assessment into the structured deviation format: a "
      "comma-separated list of Insert(['X']), Skip(['X']), Repeat(['X']), "
      "Replace(['X'], ['Y']), Swap(['X'], ['Y']) terms, where each bracket "
      "pair lists one or more activity names in single quotes. If the text "
      "finds no undesired behavior, answer exactly: No Deviation.\n"
      "Answer with the converted terms only.\n"
      "\n"
      "Text:\n" +
      raw_reply;
}

ParseOutcome repair_parse(const std::string& reply, GenerationBackend& backend,
                          const GenerationConfig& cfg, const std::string& trace_id,
                          const Trace* trace) {
  if (parse_output(reply).kind != ParseOutcome::Kind::Failure)
    throw std::logic_error("repair_parse called on a reply that parses strictly");
  GenerationRequest req{repair_prompt(reply), cfg, trace_id, trace};
  std::string converted = backend.complete(req);  // transport errors propagate
  auto out = parse_output(converted);
  if (out.kind == ParseOutcome::Kind::Failure) return ParseOutcome::failure(converted);
  return out;
}

// ---------------------------------------------------------------------------
// Detection

DetectionResult detect_trace(const Trace& t, const KnowledgeBase& kb, const LogContext& ctx,
                             GenerationBackend& backend, const Embedder& embedder,
                             const DetectOptions& opts) {
  if (embedder.name() != kb.embedder_name())
    throw ContractError("knowledge base was built with embedder '" + kb.embedder_name() +
                        "', pipeline uses '" + embedder.name() + "'");
  DetectionResult res;
  res.trace_id = t.id;

  std::vector<ExampleRef> examples;
  if (opts.top_k > 0) {
    auto hits = retrieve_top_k(kb, embedder.embed(trace_to_sentence(t)), opts.top_k,
                               opts.exclude_source_model);
    examples = to_examples(kb, hits);
    res.retrieved_ids.reserve(hits.size());
    for (const auto& h : hits) res.retrieved_ids.push_back(h.index);
  }
  auto prompt = render_prompt(t, ctx, examples, opts.tpl ? *opts.tpl : default_template());

  GenerationRequest req{prompt.rendered, opts.gen, t.id, &t};
  try {
    res.raw_reply = backend.complete(req);
  } catch (const BackendError& e) {
    res.parse_status = ParseStatus::Failed;
    res.error = e.what();
    return res;
  }

  auto out = parse_output(res.raw_reply);
  if (out.kind == ParseOutcome::Kind::Failure && opts.repair) {
    try {
      out = repair_parse(res.raw_reply, backend, opts.gen, t.id, &t);
    } catch (const BackendError& e) {
      res.parse_status = ParseStatus::Failed;
      res.error = e.what();
      return res;
    }
    if (out.kind != ParseOutcome::Kind::Failure) res.parse_status = ParseStatus::Repaired;
  }
  switch (out.kind) {
    case ParseOutcome::Kind::Deviations:
      res.deviations = std::move(out.deviations);
      break;
    case ParseOutcome::Kind::Conforming:
      break;
    case ParseOutcome::Kind::Failure:
      res.parse_status = ParseStatus::Failed;
      res.error = "reply did not match the output format";
      break;
  }
  return res;
}

std::vector<DetectionResult> detect_log(const EventLog& log, const KnowledgeBase& kb,
                                        GenerationBackend& backend, const Embedder& embedder,
                                        const LogDetectOptions& opts) {
  if (embedder.name() != kb.embedder_name())
    throw ContractError("knowledge base was built with embedder '" + kb.embedder_name() +
                        "', pipeline uses '" + embedder.name() + "'");
  std::vector<DetectionResult> results(log.size());
  if (log.size() == 0) return results;
  LogContext ctx = extract_log_context(log, opts.context_traces, opts.context_threshold);

  size_t workers = opts.workers > 0 ? static_cast<size_t>(opts.workers)
                                    : std::max(1u, std::thread::hardware_concurrency());
  if (!backend.supports_concurrency()) workers = 1;
  workers = std::min(workers, log.size());

  std::atomic<size_t> cursor{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto work = [&] {
    while (true) {
      size_t i = cursor.fetch_add(1);
      if (i >= log.size()) break;
      try {
        results[i] = detect_trace(log.traces()[i], kb, ctx, backend, embedder, opts);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        break;
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

// ---------------------------------------------------------------------------
// Backends

std::string OracleBackend::complete(const GenerationRequest& req) {
  auto it = bundle_->ground_truth.find(req.trace_id);
  if (it == bundle_->ground_truth.end())
    throw BackendError("oracle has no ground truth for trace '" + req.trace_id + "'");
  return render_reply(it->second);
}

ScriptedBackend::ScriptedBackend(std::map<std::string, std::vector<std::string>> replies,
                                 std::string fallback)
    : replies_(std::move(replies)), fallback_(std::move(fallback)) {}

std::string ScriptedBackend::complete(const GenerationRequest& req) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = replies_.find(req.trace_id);
  if (it != replies_.end()) {
    size_t& used = consumed_[req.trace_id];
    if (used < it->second.size()) return it->second[used++];
  }
  return fallback_;
}

namespace {

struct Alignment {
  int cost;
  std::vector<DeviationPattern> ops;
};

// Minimum insert/delete alignment of observed against reference. Equal
// heads always match; on cost ties the observed-side insertion is taken
// first. Adjacent same-kind operations merge into one fragment.
Alignment align(const ActivitySeq& t, const ActivitySeq& r) {
  const size_t n = t.size(), m = r.size();
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = n + 1; i-- > 0;) {
    for (size_t j = m + 1; j-- > 0;) {
      if (i == n && j == m)
        cost[i][j] = 0;
      else if (i == n)
        cost[i][j] = static_cast<int>(m - j);
      else if (j == m)
        cost[i][j] = static_cast<int>(n - i);
      else if (t[i] == r[j])
        cost[i][j] = cost[i + 1][j + 1];
      else
        cost[i][j] = 1 + std::min(cost[i + 1][j], cost[i][j + 1]);
    }
  }

  Alignment out{cost[0][0], {}};
  std::optional<DeviationKind> run_kind;
  ActivitySeq run;
  auto flush = [&] {
    if (run_kind) {
      out.ops.push_back(DeviationPattern{*run_kind, run, {}, std::nullopt});
      run.clear();
      run_kind.reset();
    }
  };
  auto emit = [&](DeviationKind k, const Activity& a) {
    if (run_kind != k) {
      flush();
      run_kind = k;
    }
    run.push_back(a);
  };
  size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && t[i] == r[j]) {
      flush();
      ++i;
      ++j;
      continue;
    }
    bool can_insert = i < n && cost[i][j] == 1 + cost[i + 1][j];
    if (can_insert) {
      emit(DeviationKind::Insert, t[i]);
      ++i;
    } else {
      emit(DeviationKind::Skip, r[j]);
      ++j;
    }
  }
  flush();
  return out;
}

}  // namespace

std::vector<DeviationPattern> heuristic_reference_detect(
    const Trace& t, const std::vector<ActivitySeq>& references) {
  if (references.empty())
    throw ContractError("heuristic detection needs at least one reference sequence");
  size_t best = 0;
  int best_cost = -1;
  for (size_t i = 0; i < references.size(); ++i) {
    Alignment a = align(t.activities, references[i]);
    if (best_cost < 0 || a.cost < best_cost) {
      best_cost = a.cost;
      best = i;
    }
  }
  return align(t.activities, references[best]).ops;
}

HeuristicBackend::HeuristicBackend(std::vector<ActivitySeq> references)
    : references_(std::move(references)) {
  if (references_.empty())
    throw ContractError("heuristic backend needs at least one reference sequence");
}

std::string HeuristicBackend::complete(const GenerationRequest& req) {
  if (req.trace == nullptr)
    throw BackendError("heuristic backend needs the trace context of the request");
  return render_reply(heuristic_reference_detect(*req.trace, references_));
}

// ---------------------------------------------------------------------------
// Result files

std::string raw_reply_file_name(size_t index, const std::string& trace_id) {
  std::string safe;
  for (char c : trace_id) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '.' || c == '_' ||
              c == '-';
    safe += ok ? c : '_';
  }
  return std::to_string(index) + "_" + safe + ".txt";
}

void write_results_jsonl(const std::vector<DetectionResult>& results,
                         const std::filesystem::path& file,
                         const std::string& raw_reply_dir_name) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    nlohmann::ordered_json j;
    j["trace_id"] = r.trace_id;
    j["deviations"] = nlohmann::ordered_json::array();
    for (const auto& d : r.deviations) j["deviations"].push_back(deviation_to_json(d));
    j["parse_status"] = std::string(parse_status_name(r.parse_status));
    j["retrieved_ids"] = r.retrieved_ids;
    j["raw_reply_path"] = raw_reply_dir_name + "/" + raw_reply_file_name(i, r.trace_id);
    if (!r.error.empty()) j["error"] = r.error;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + file.string());
}

void write_raw_replies(const std::vector<DetectionResult>& results,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < results.size(); ++i) {
    auto path = dir / raw_reply_file_name(i, results[i].trace_id);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << results[i].raw_reply;
  }
}

std::vector<DetectionResult> read_results_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<DetectionResult> results;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad results line: ") + e.what(),
                       static_cast<int>(line_no));
    }
    DetectionResult r;
    r.trace_id = j.at("trace_id").get<std::string>();
    for (const auto& dj : j.at("deviations")) r.deviations.push_back(deviation_from_json(dj));
    r.parse_status = parse_status_from_name(j.at("parse_status").get<std::string>());
    if (j.contains("retrieved_ids"))
      r.retrieved_ids = j["retrieved_ids"].get<std::vector<size_t>>();
    if (j.contains("error")) r.error = j["error"].get<std::string>();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace tracesift
