#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tracesift/core.hpp"
#include "tracesift/embed.hpp"
#include "tracesift/kb.hpp"
#include "tracesift/model_io.hpp"
#include "tracesift/promptgen.hpp"

namespace tracesift {

struct GenerationConfig {
  double temperature = 0.0;
  uint64_t seed = 0;
  int max_tokens = 1024;
};

// One completion request. trace_id and trace give deterministic local
// backends the context a real model would read out of the prompt.
struct GenerationRequest {
  std::string prompt;
  GenerationConfig config;
  std::string trace_id;
  const Trace* trace = nullptr;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual const std::string& name() const = 0;
  virtual bool supports_concurrency() const { return true; }
  // Returns the reply text; throws BackendError on transport problems.
  virtual std::string complete(const GenerationRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Reply parsing

enum class ParseStatus : uint8_t { Strict, Repaired, Failed };
std::string_view parse_status_name(ParseStatus s);
ParseStatus parse_status_from_name(std::string_view name);

struct ParseOutcome {
  enum class Kind : uint8_t { Deviations, Conforming, Failure };
  Kind kind;
  std::vector<DeviationPattern> deviations;  // non-empty iff kind == Deviations
  std::string offending;                     // retained reply text on Failure

  static ParseOutcome conforming() { return {Kind::Conforming, {}, {}}; }
  static ParseOutcome failure(std::string text) { return {Kind::Failure, {}, std::move(text)}; }
  static ParseOutcome deviations_of(std::vector<DeviationPattern> ds) {
    return {Kind::Deviations, std::move(ds), {}};
  }
};

// Scans the reply for constructor expressions such as Insert(['a']) or
// Swap(['x'], ['y']); prose around them is ignored. A malformed constructor
// fails the whole reply. "No Deviation." (exact) with no constructors is
// Conforming; constructors win when both appear.
ParseOutcome parse_output(const std::string& reply);

// Inverse of parse_output for well-formed lists: "Insert(['a']), Skip(['b'])".
std::string render_deviations(const std::vector<DeviationPattern>& ds);
std::string render_reply(const std::vector<DeviationPattern>& ds);  // "No Deviation." when empty

// The single-round conversion prompt for an unparseable reply.
std::string repair_prompt(const std::string& raw_reply);

// Re-prompts once and strictly parses the converted text. Calling this with
// a reply that parses strictly is a programming error (std::logic_error).
// trace_id/trace give scripted backends the context of the original call.
ParseOutcome repair_parse(const std::string& reply, GenerationBackend& backend,
                          const GenerationConfig& cfg, const std::string& trace_id = {},
                          const Trace* trace = nullptr);

// ---------------------------------------------------------------------------
// Per-trace and per-log detection

struct DetectionResult {
  std::string trace_id;
  std::vector<DeviationPattern> deviations;  // empty = conforming (unless failed)
  std::string raw_reply;
  ParseStatus parse_status = ParseStatus::Strict;
  std::vector<size_t> retrieved_ids;  // KB entry indices used for the prompt
  std::string error;                  // transport/parse note when failed
};

struct DetectOptions {
  size_t top_k = 5;              // 0 = no retrieval
  bool repair = true;            // one repair round on strict-parse failure
  GenerationConfig gen;
  std::optional<std::string> exclude_source_model;
  const PromptTemplate* tpl = nullptr;  // null = default_template()
};

DetectionResult detect_trace(const Trace& t, const KnowledgeBase& kb, const LogContext& ctx,
                             GenerationBackend& backend, const Embedder& embedder,
                             const DetectOptions& opts = {});

struct LogDetectOptions : DetectOptions {
  int workers = 0;  // 0 = hardware concurrency
  size_t context_traces = 3;
  double context_threshold = 0.10;
};

// Runs detect_trace over every trace with a bounded worker pool; results
// come back in input order regardless of scheduling.
std::vector<DetectionResult> detect_log(const EventLog& log, const KnowledgeBase& kb,
                                        GenerationBackend& backend, const Embedder& embedder,
                                        const LogDetectOptions& opts = {});

// ---------------------------------------------------------------------------
// Deterministic backends

class NullBackend final : public GenerationBackend {
 public:
  const std::string& name() const override { return name_; }
  std::string complete(const GenerationRequest&) override { return "No Deviation."; }

 private:
  std::string name_ = "null";
};

// Reads the known deviations of the requested trace straight from a bundle.
class OracleBackend final : public GenerationBackend {
 public:
  explicit OracleBackend(const LogBundle& bundle) : bundle_(&bundle) {}
  const std::string& name() const override { return name_; }
  std::string complete(const GenerationRequest& req) override;

 private:
  const LogBundle* bundle_;
  std::string name_ = "oracle";
};

// Plays back canned replies per trace id; successive calls for the same
// trace consume successive entries (first call, then repair round).
class ScriptedBackend final : public GenerationBackend {
 public:
  explicit ScriptedBackend(std::map<std::string, std::vector<std::string>> replies,
                           std::string fallback = "No Deviation.");
  const std::string& name() const override { return name_; }
  std::string complete(const GenerationRequest& req) override;

 private:
  std::map<std::string, std::vector<std::string>> replies_;
  std::map<std::string, size_t> consumed_;
  std::string fallback_;
  std::mutex mu_;
  std::string name_ = "scripted";
};

// Minimum insert/delete alignment of the trace against each reference
// sequence; cheapest reference wins (ties: first). Adjacent same-kind edit
// operations merge into one fragment.
std::vector<DeviationPattern> heuristic_reference_detect(
    const Trace& t, const std::vector<ActivitySeq>& references);

class HeuristicBackend final : public GenerationBackend {
 public:
  explicit HeuristicBackend(std::vector<ActivitySeq> references);
  const std::string& name() const override { return name_; }
  std::string complete(const GenerationRequest& req) override;

 private:
  std::vector<ActivitySeq> references_;
  std::string name_ = "heuristic";
};

// ---------------------------------------------------------------------------
// Result files

void write_results_jsonl(const std::vector<DetectionResult>& results,
                         const std::filesystem::path& file,
                         const std::string& raw_reply_dir_name = "raw_replies");
void write_raw_replies(const std::vector<DetectionResult>& results,
                       const std::filesystem::path& dir);
// Raw replies are not loaded back; raw_reply stays empty.
std::vector<DetectionResult> read_results_jsonl(const std::filesystem::path& file);

// File name of the raw reply of the result at position index ("<index>_<id>.txt"
// with the id sanitized to filesystem-safe characters).
std::string raw_reply_file_name(size_t index, const std::string& trace_id);

}  // namespace tracesift
