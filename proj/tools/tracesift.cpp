// Command-line driver: builds knowledge bases, synthesizes logs with known
// deviations, runs detection, and evaluates results — each run optionally
// snapshotted into a run directory for audit and replay.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tracesift/core.hpp"
#include "tracesift/detect.hpp"
#include "tracesift/embed.hpp"
#include "tracesift/errors.hpp"
#include "tracesift/evalx.hpp"
#include "tracesift/http_backend.hpp"
#include "tracesift/kb.hpp"
#include "tracesift/loggen.hpp"
#include "tracesift/model_io.hpp"
#include "tracesift/promptgen.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace tracesift;

// Everything a run needs, snapshotted verbatim as config.json before any
// work happens so a deterministic run can be reproduced from the snapshot.
struct RunConfig {
  std::string command;
  uint64_t seed = 0;

  std::string embedder = "builtin";  // builtin | remote
  size_t dim = 256;
  std::string embed_endpoint;
  std::string embed_model;

  std::string backend = "null";  // oracle | null | heuristic | scripted | remote
  std::string scripted_path;
  std::string endpoint;
  std::string model;

  size_t k = 5;
  size_t n_traces = 3;
  double activity_threshold = 0.10;

  double share = 0.55;
  int max_deviations = 3;
  int frag_min = 1;
  int frag_max = 3;
  int retries = 10;
  size_t min_traces = 100;

  int workers = 0;
  double temperature = 0.0;
  int max_tokens = 1024;
  bool no_repair = false;
  std::string exclude_model;
  std::string labeling = "conforming-positive";  // | deviating-positive
  std::string format = "auto";                   // auto | bundle | jsonl | xes

  std::string api_key_env = "TRACESIFT_API_KEY";
  int http_timeout = 120;

  std::string models, log, kb, out, results, truth, bundles, run_dir, csv, config_file;
  std::vector<uint64_t> seeds{1, 2, 3};
};

json config_to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["embedder"] = {{"kind", c.embedder},
                   {"dim", c.dim},
                   {"endpoint", c.embed_endpoint},
                   {"model", c.embed_model}};
  j["backend"] = {{"kind", c.backend},
                  {"scripted_path", c.scripted_path},
                  {"endpoint", c.endpoint},
                  {"model", c.model}};
  j["k"] = c.k;
  j["n_traces"] = c.n_traces;
  j["activity_threshold"] = c.activity_threshold;
  j["injection"] = {{"share", c.share},
                    {"max_deviations_per_trace", c.max_deviations},
                    {"fragment_len_min", c.frag_min},
                    {"fragment_len_max", c.frag_max},
                    {"retries_per_trace", c.retries},
                    {"min_traces", c.min_traces}};
  j["workers"] = c.workers;
  j["generation"] = {{"temperature", c.temperature},
                     {"max_tokens", c.max_tokens},
                     {"repair", !c.no_repair}};
  j["exclude_model"] = c.exclude_model;
  j["labeling"] = c.labeling;
  j["format"] = c.format;
  j["http"] = {{"api_key_env", c.api_key_env}, {"timeout_seconds", c.http_timeout}};
  j["paths"] = {{"models", c.models}, {"log", c.log},         {"kb", c.kb},
                {"out", c.out},       {"results", c.results}, {"truth", c.truth},
                {"bundles", c.bundles}, {"csv", c.csv},       {"run_dir", c.run_dir}};
  j["seeds"] = c.seeds;
  return j;
}

// Relative paths resolve against the run directory when one is given.
fs::path resolve(const RunConfig& c, const std::string& p) {
  if (c.run_dir.empty() || p.empty()) return fs::path(p);
  fs::path path(p);
  return path.is_absolute() ? path : fs::path(c.run_dir) / path;
}

void snapshot_config(const RunConfig& c) {
  if (c.run_dir.empty()) return;
  fs::create_directories(c.run_dir);
  fs::path file = fs::path(c.run_dir) / "config.json";
  // Post-processing over an existing run keeps the run's own snapshot and
  // records its settings beside it instead.
  const bool post_processing = c.command == "evaluate" || c.command == "stats";
  if (post_processing && fs::exists(file)) {
    std::ifstream in(file);
    const json existing = json::parse(in, nullptr, false);
    if (existing.is_object() && existing.value("command", std::string()) != c.command) {
      file = fs::path(c.run_dir) / ("config." + c.command + ".json");
    }
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << config_to_json(c).dump(2) << "\n";
}

InjectionConfig injection_of(const RunConfig& c) {
  InjectionConfig cfg;
  cfg.deviating_share = c.share;
  cfg.max_deviations_per_trace = c.max_deviations;
  cfg.fragment_len_min = c.frag_min;
  cfg.fragment_len_max = c.frag_max;
  cfg.retries_per_trace = c.retries;
  cfg.min_traces = c.min_traces;
  cfg.seed = c.seed;
  return cfg;
}

std::string format_count(uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  int run = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (run && run % 3 == 0) out.push_back(',');
    out.push_back(*it);
    ++run;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char ch : name) {
    const bool safe = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                      (ch >= '0' && ch <= '9') || ch == '-' || ch == '_' || ch == '.';
    out.push_back(safe ? ch : '_');
  }
  return out.empty() ? std::string("unnamed") : out;
}

// Model files: *.net.json parses as a workflow net and is played out;
// every other *.json is a sequence model. Directory order is sorted.
std::vector<ProcessModel> load_models_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no models found in " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<ProcessModel> models;
  for (const auto& file : files) {
    if (file.string().size() > 9 && file.string().ends_with(".net.json")) {
      models.push_back(playout_net(parse_workflow_net_file(file)).model);
    } else {
      models.push_back(parse_sequence_model_file(file));
    }
  }
  if (models.empty()) throw IoError("no models found in " + dir.string());
  return models;
}

struct LoadedLog {
  EventLog log;
  std::optional<LogBundle> bundle;
};

LoadedLog load_log_file(const fs::path& path, const std::string& format) {
  if (!fs::exists(path)) throw IoError("cannot open " + path.string());
  const std::string ext = path.extension().string();
  const bool want_xes = format == "xes" || (format == "auto" && ext == ".xes");
  if (want_xes) return {read_event_log(path, LogFormat::Xes), std::nullopt};
  if (format == "jsonl" || (format == "auto" && ext == ".jsonl")) {
    return {read_event_log(path, LogFormat::Jsonl), std::nullopt};
  }
  if (format == "bundle") {
    LogBundle b = read_bundle(path);
    EventLog log = b.log;
    return {std::move(log), std::move(b)};
  }
  try {
    LogBundle b = read_bundle(path);
    EventLog log = b.log;
    return {std::move(log), std::move(b)};
  } catch (const Error&) {
    return {read_event_log(path, LogFormat::Jsonl), std::nullopt};
  }
}

// Serialized append log of every remote round trip, kept in the run dir.
class ExchangeLog {
 public:
  explicit ExchangeLog(const fs::path& file) : out_(file, std::ios::binary | std::ios::app) {
    if (!out_) throw IoError("cannot open " + file.string() + " for writing");
  }
  void append(const HttpExchange& x) {
    json j;
    j["url"] = x.url;
    j["attempt"] = x.attempt;
    j["status"] = x.status;
    j["request"] = x.request_body;
    j["response"] = x.response_body;
    std::lock_guard<std::mutex> lock(mu_);
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  std::mutex mu_;
};

RemoteOptions remote_options(const RunConfig& c, const std::string& endpoint,
                             const std::string& model, ExchangeLog* xlog) {
  RemoteOptions opts;
  opts.endpoint = endpoint;
  opts.model = model;
  opts.api_key_env = c.api_key_env;
  opts.timeout_seconds = c.http_timeout;
  if (xlog) opts.on_exchange = [xlog](const HttpExchange& x) { xlog->append(x); };
  return opts;
}

std::unique_ptr<Embedder> make_embedder(const RunConfig& c, size_t dim, ExchangeLog* xlog) {
  if (c.embedder == "builtin") return std::make_unique<HashedNgramEmbedder>(dim);
  if (c.embedder == "remote") {
    if (c.embed_endpoint.empty() || c.embed_model.empty()) {
      throw ContractError("a remote embedder needs --embed-endpoint and --embed-model");
    }
    return std::make_unique<RemoteEmbedder>(
        remote_options(c, c.embed_endpoint, c.embed_model, xlog), dim);
  }
  throw ContractError("unknown embedder '" + c.embedder + "' (builtin or remote)");
}

// References for the heuristic backend: the distinct desired executions the
// knowledge base remembers.
std::vector<ActivitySeq> desired_references(const KnowledgeBase& kb) {
  std::vector<ActivitySeq> refs;
  for (const auto& entry : kb.entries()) {
    if (!entry.deviations.empty()) continue;
    if (std::find(refs.begin(), refs.end(), entry.trace.activities) == refs.end()) {
      refs.push_back(entry.trace.activities);
    }
  }
  return refs;
}

std::unique_ptr<GenerationBackend> make_backend(const RunConfig& c, const LoadedLog* loaded,
                                                const KnowledgeBase* kb, ExchangeLog* xlog) {
  if (c.backend == "null") return std::make_unique<NullBackend>();
  if (c.backend == "oracle") {
    if (!loaded || !loaded->bundle) {
      throw ContractError("the oracle backend needs a bundle with ground truth as --log");
    }
    return std::make_unique<OracleBackend>(*loaded->bundle);
  }
  if (c.backend == "heuristic") {
    if (!kb) throw ContractError("the heuristic backend needs a knowledge base");
    return std::make_unique<HeuristicBackend>(desired_references(*kb));
  }
  if (c.backend == "scripted") {
    if (c.scripted_path.empty()) throw ContractError("the scripted backend needs --scripted");
    std::map<std::string, std::vector<std::string>> replies;
    const json parsed =
        json::parse(std::ifstream(resolve(c, c.scripted_path)), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
      throw IoError(c.scripted_path + " is not a JSON object of reply arrays");
    }
    for (const auto& [id, queue] : parsed.items()) {
      std::vector<std::string>& q = replies[id];
      if (queue.is_string()) {
        q.push_back(queue.get<std::string>());
      } else if (queue.is_array()) {
        for (const auto& r : queue) q.push_back(r.get<std::string>());
      } else {
        throw IoError(c.scripted_path + ": replies for \"" + id + "\" are neither string nor array");
      }
    }
    return std::make_unique<ScriptedBackend>(std::move(replies));
  }
  if (c.backend == "remote") {
    if (c.endpoint.empty() || c.model.empty()) {
      throw ContractError("the remote backend needs --endpoint and --model");
    }
    return std::make_unique<RemoteBackend>(remote_options(c, c.endpoint, c.model, xlog));
  }
  throw ContractError("unknown backend '" + c.backend +
                      "' (oracle, null, heuristic, scripted, or remote)");
}

std::unique_ptr<ExchangeLog> make_exchange_log(const RunConfig& c) {
  const bool remote_involved = c.backend == "remote" || c.embedder == "remote";
  if (c.run_dir.empty() || !remote_involved) return nullptr;
  return std::make_unique<ExchangeLog>(fs::path(c.run_dir) / "http_exchanges.jsonl");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_build_kb(RunConfig& c) {
  snapshot_config(c);
  const auto models = load_models_dir(resolve(c, c.models));
  auto xlog = make_exchange_log(c);
  const auto embedder = make_embedder(c, c.dim, xlog.get());
  const InjectionConfig cfg = injection_of(c);
  validate_config(cfg);

  // Assembled here instead of through the balanced library call so that
  // --share is honored exactly as configured.
  std::vector<KbEntry> entries;
  for (const auto& m : models) {
    const InjectionResult res = generate_bundle(m, cfg);
    for (const auto& t : res.bundle.log.traces()) {
      entries.push_back(KbEntry{t, embedder->embed(trace_to_sentence(t)),
                                res.bundle.ground_truth.at(t.id), m.id()});
    }
  }
  KnowledgeBase kb(embedder->name(), embedder->dim(), std::move(entries));
  const fs::path out = resolve(c, c.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_kb(kb, out);

  const KbStats& s = kb.stats();
  std::cout << "knowledge base: " << format_count(kb.entries().size()) << " entries from "
            << models.size() << (models.size() == 1 ? " model\n" : " models\n");
  std::cout << "  " << format_count(s.desired) << " desired, " << format_count(s.deviating)
            << " deviating: " << format_count(s.per_kind[0]) << " insertions, "
            << format_count(s.per_kind[1]) << " skips, " << format_count(s.per_kind[2])
            << " repetitions, " << format_count(s.per_kind[3]) << " replacements, "
            << format_count(s.per_kind[4]) << " swaps\n";
  std::cout << "written to " << out.string() << "\n";
  return 0;
}

int cmd_synth_logs(RunConfig& c) {
  snapshot_config(c);
  const auto models = load_models_dir(resolve(c, c.models));
  const fs::path out_dir = resolve(c, c.out);
  fs::create_directories(out_dir);
  const InjectionConfig base = injection_of(c);
  validate_config(base);

  size_t total_traces = 0, total_deviating = 0;
  for (const auto& m : models) {
    const InjectionResult res = generate_bundle(m, base);
    const fs::path file = out_dir / (sanitize(m.id()) + ".bundle.json");
    write_bundle(res.bundle, file);
    const size_t n = res.bundle.log.size();
    total_traces += n;
    total_deviating += res.stats.deviating;
    char share_buf[16];
    snprintf(share_buf, sizeof share_buf, "%.2f", res.stats.realized_share(n));
    std::cout << "model " << m.id() << ": " << n << " traces, " << res.stats.deviating
              << " deviating (share " << share_buf << ") -> " << file.string() << "\n";
  }
  std::cout << models.size() << (models.size() == 1 ? " bundle, " : " bundles, ")
            << total_traces << " traces, " << total_deviating << " deviating\n";
  return 0;
}

int cmd_detect(RunConfig& c) {
  snapshot_config(c);
  const KnowledgeBase kb = load_kb(resolve(c, c.kb));
  const LoadedLog loaded = load_log_file(resolve(c, c.log), c.format);
  auto xlog = make_exchange_log(c);
  const auto embedder = make_embedder(c, kb.dim(), xlog.get());
  const auto backend = make_backend(c, &loaded, &kb, xlog.get());

  LogDetectOptions opts;
  opts.top_k = c.k;
  opts.repair = !c.no_repair;
  opts.gen = GenerationConfig{c.temperature, c.seed, c.max_tokens};
  if (!c.exclude_model.empty()) opts.exclude_source_model = c.exclude_model;
  opts.workers = c.workers;
  opts.context_traces = c.n_traces;
  opts.context_threshold = c.activity_threshold;

  const auto results = detect_log(loaded.log, kb, *backend, *embedder, opts);

  if (!c.run_dir.empty()) {
    const fs::path run(c.run_dir);
    write_raw_replies(results, run / "raw_replies");
    fs::create_directories(run / "prompts");
    const LogContext ctx = extract_log_context(loaded.log, c.n_traces, c.activity_threshold);
    for (size_t i = 0; i < results.size(); ++i) {
      std::vector<RetrievalHit> hits;
      for (size_t id : results[i].retrieved_ids) hits.push_back({id, 0.0});
      const PromptBundle prompt =
          render_prompt(loaded.log.traces()[i], ctx, to_examples(kb, hits));
      write_text(run / "prompts" / raw_reply_file_name(i, results[i].trace_id), prompt.rendered);
    }
  }

  const fs::path out = resolve(c, c.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_results_jsonl(results, out);

  size_t conforming = 0, deviating = 0, failed = 0;
  for (const auto& r : results) {
    if (r.parse_status == ParseStatus::Failed) {
      ++failed;
    } else if (r.deviations.empty()) {
      ++conforming;
    } else {
      ++deviating;
    }
  }
  std::cout << "analyzed " << results.size() << " traces with backend '" << backend->name()
            << "': " << conforming << " conforming, " << deviating << " deviating, " << failed
            << " failed\n";
  std::cout << "results written to " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(RunConfig& c) {
  snapshot_config(c);
  const auto results = read_results_jsonl(resolve(c, c.results));
  const LogBundle truth = read_bundle(resolve(c, c.truth));
  EvaluationOptions eo;
  if (c.labeling == "deviating-positive") {
    eo.labeling = ConformingLabeling::DeviatingAsPositive;
  } else if (c.labeling != "conforming-positive") {
    throw ContractError("unknown labeling '" + c.labeling +
                        "' (conforming-positive or deviating-positive)");
  }
  const Evaluation ev = evaluate_results(results, truth.ground_truth, eo);
  const MetricsReport report = aggregate_metrics({{truth.log.name(), ev.totals}});

  std::cout << format_metrics_table(report);
  if (ev.parse_failures > 0) {
    std::cout << "parse failures: " << ev.parse_failures << " of " << ev.traces
              << " traces (rate " << ev.failure_rate().to_string() << ")\n";
  }

  json out;
  out["log"] = truth.log.name();
  out["counts"] = counts_to_json(ev.totals);
  out["metrics"] = metrics_to_json(report);
  out["evaluation"] = evaluation_to_json(ev);
  const fs::path report_path = resolve(c, c.out);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  write_text(report_path, out.dump(2) + "\n");
  std::cout << "report written to " << report_path.string() << "\n";

  if (!c.csv.empty()) {
    const fs::path csv_path = resolve(c, c.csv);
    write_text(csv_path, metrics_to_csv(report));
    std::cout << "csv written to " << csv_path.string() << "\n";
  }
  return 0;
}

int cmd_stats(RunConfig& c) {
  snapshot_config(c);
  const fs::path dir = resolve(c, c.bundles);
  if (!fs::is_directory(dir)) throw IoError("no bundles found in " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    if (entry.path().filename() == "manifest.json") continue;  // fixture metadata
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LogBundle> bundles;
  for (const auto& file : files) bundles.push_back(read_bundle(file));
  if (bundles.empty()) throw IoError("no bundles found in " + dir.string());

  const DescriptiveStats stats = descriptive_stats(bundles);
  std::cout << format_stats(stats);
  if (!c.out.empty()) {
    const fs::path out = resolve(c, c.out);
    write_text(out, stats_to_json(stats).dump(2) + "\n");
    std::cout << "stats written to " << out.string() << "\n";
  }
  return 0;
}

std::string format_std_cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

int cmd_bench(RunConfig& c) {
  snapshot_config(c);
  if (c.seeds.size() < 2) throw ContractError("bench needs at least two --seeds");
  const auto models = load_models_dir(resolve(c, c.models));
  auto xlog = make_exchange_log(c);

  std::vector<double> kb_times, inference_times;
  auto pipeline = [&](uint64_t seed) -> ScoreCounts {
    RunConfig rc = c;
    rc.seed = seed;
    const InjectionConfig cfg = injection_of(rc);
    validate_config(cfg);

    const auto embedder = make_embedder(rc, rc.dim, xlog.get());
    const auto kb_start = std::chrono::steady_clock::now();
    const KnowledgeBase kb = build_kb(models, cfg, *embedder);
    kb_times.push_back(seconds_since(kb_start));

    ScoreCounts totals;
    for (const auto& m : models) {
      const InjectionResult res = generate_bundle(m, cfg);
      std::unique_ptr<GenerationBackend> backend;
      if (rc.backend == "oracle") {
        backend = std::make_unique<OracleBackend>(res.bundle);
      } else if (rc.backend == "heuristic") {
        backend = std::make_unique<HeuristicBackend>(
            std::vector<ActivitySeq>(m.sequences()));
      } else {
        LoadedLog none{res.bundle.log, std::nullopt};
        backend = make_backend(rc, &none, &kb, xlog.get());
      }

      LogDetectOptions opts;
      opts.top_k = rc.k;
      opts.gen = GenerationConfig{rc.temperature, seed, rc.max_tokens};
      opts.workers = rc.workers;
      opts.context_traces = rc.n_traces;
      opts.context_threshold = rc.activity_threshold;
      opts.exclude_source_model = m.id();  // the KB holds this model's own traces

      const auto start = std::chrono::steady_clock::now();
      const auto results = detect_log(res.bundle.log, kb, *backend, *embedder, opts);
      inference_times.push_back(seconds_since(start));
      totals += evaluate_results(results, res.bundle.ground_truth).totals;
    }
    return totals;
  };

  const RobustnessReport robustness = robustness_run(c.seeds, pipeline);

  RunTimings timings;
  if (!kb_times.empty()) {
    double sum = 0.0;
    for (double t : kb_times) sum += t;
    timings.kb_population_seconds = sum / static_cast<double>(kb_times.size());
  }
  timings.per_log_inference_seconds = inference_times;
  const TimingReport timing = timing_report(timings);

  std::cout << "metric spread over " << c.seeds.size() << " seeds (population std):\n";
  std::cout << "  category     precision    recall        f1\n";
  for (int k = 0; k < kDeviationKindCount; ++k) {
    const auto& cell = robustness.of(static_cast<DeviationKind>(k));
    char line[96];
    snprintf(line, sizeof line, "  %-12s %9s %9s %9s\n",
             std::string(kind_name(static_cast<DeviationKind>(k))).c_str(),
             format_std_cell(cell.precision).c_str(), format_std_cell(cell.recall).c_str(),
             format_std_cell(cell.f1).c_str());
    std::cout << line;
  }
  char line[96];
  snprintf(line, sizeof line, "  %-12s %9s %9s %9s\n", "conforming",
           format_std_cell(robustness.conforming.precision).c_str(),
           format_std_cell(robustness.conforming.recall).c_str(),
           format_std_cell(robustness.conforming.f1).c_str());
  std::cout << line;
  for (const auto& outcome : robustness.seeds) {
    if (!outcome.ok) {
      std::cout << "seed " << outcome.seed << " failed: " << outcome.error << "\n";
    }
  }
  if (timing.available) {
    char t[128];
    snprintf(t, sizeof t,
             "timing: knowledge-base population %.2fs, mean per-log inference %.2fs (%zu logs)\n",
             timing.kb_population_seconds, timing.inference_mean_seconds, timing.logs);
    std::cout << t;
  } else {
    std::cout << "timing: unavailable\n";
  }

  json out;
  out["robustness"] = robustness_to_json(robustness);
  out["timing"] = timing_to_json(timing);
  const fs::path report_path = resolve(c, c.out);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  write_text(report_path, out.dump(2) + "\n");
  std::cout << "report written to " << report_path.string() << "\n";
  return 0;
}

// Fields of a stored config.json applied to bench unless the matching flag
// was given explicitly on the command line.
void apply_config_file(RunConfig& c, const CLI::App* sub) {
  const fs::path path = c.config_file;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw IoError(path.string() + " is not a JSON object");

  const auto given = [&](const std::string& flag) {
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  if (j.contains("seeds") && !given("--seeds")) {
    c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  }
  if (j.contains("k") && !given("--k")) c.k = j.at("k").get<size_t>();
  if (j.contains("n_traces") && !given("--n-traces")) c.n_traces = j.at("n_traces").get<size_t>();
  if (j.contains("activity_threshold") && !given("--activity-threshold")) {
    c.activity_threshold = j.at("activity_threshold").get<double>();
  }
  if (j.contains("workers") && !given("--workers")) c.workers = j.at("workers").get<int>();
  if (j.contains("embedder")) {
    const json& e = j.at("embedder");
    if (e.contains("kind") && !given("--embedder")) c.embedder = e.at("kind").get<std::string>();
    if (e.contains("dim") && !given("--dim")) c.dim = e.at("dim").get<size_t>();
    if (e.contains("endpoint") && !given("--embed-endpoint")) {
      c.embed_endpoint = e.at("endpoint").get<std::string>();
    }
    if (e.contains("model") && !given("--embed-model")) {
      c.embed_model = e.at("model").get<std::string>();
    }
  }
  if (j.contains("backend")) {
    const json& b = j.at("backend");
    if (b.contains("kind") && !given("--backend")) c.backend = b.at("kind").get<std::string>();
    if (b.contains("scripted_path") && !given("--scripted")) {
      c.scripted_path = b.at("scripted_path").get<std::string>();
    }
    if (b.contains("endpoint") && !given("--endpoint")) {
      c.endpoint = b.at("endpoint").get<std::string>();
    }
    if (b.contains("model") && !given("--model")) c.model = b.at("model").get<std::string>();
  }
  if (j.contains("injection")) {
    const json& i = j.at("injection");
    if (i.contains("share") && !given("--share")) c.share = i.at("share").get<double>();
    if (i.contains("max_deviations_per_trace") && !given("--max-deviations")) {
      c.max_deviations = i.at("max_deviations_per_trace").get<int>();
    }
    if (i.contains("fragment_len_min") && !given("--frag-min")) {
      c.frag_min = i.at("fragment_len_min").get<int>();
    }
    if (i.contains("fragment_len_max") && !given("--frag-max")) {
      c.frag_max = i.at("fragment_len_max").get<int>();
    }
    if (i.contains("retries_per_trace") && !given("--retries")) {
      c.retries = i.at("retries_per_trace").get<int>();
    }
    if (i.contains("min_traces") && !given("--min-traces")) {
      c.min_traces = i.at("min_traces").get<size_t>();
    }
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    if (p.contains("models") && !given("--models")) c.models = p.at("models").get<std::string>();
    if (p.contains("out") && !given("--out")) c.out = p.at("out").get<std::string>();
  }
}

void add_injection_flags(CLI::App* sub, RunConfig& c, double default_share) {
  // capture_default_str reads the current value, so set the per-command
  // default for the help text; the runtime default is applied after parsing
  // since the same config struct backs every subcommand.
  c.share = default_share;
  sub->add_option("--share", c.share, "Share of traces that receive deviations")
      ->capture_default_str();
  sub->add_option("--max-deviations", c.max_deviations, "Deviations drawn per targeted trace: 1..N")
      ->capture_default_str();
  sub->add_option("--frag-min", c.frag_min, "Minimum fragment length")->capture_default_str();
  sub->add_option("--frag-max", c.frag_max, "Maximum fragment length")->capture_default_str();
  sub->add_option("--retries", c.retries, "Redraw budget per targeted trace")
      ->capture_default_str();
  sub->add_option("--min-traces", c.min_traces, "Duplicate traces up to this log size")
      ->capture_default_str();
}

void add_embedder_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--embedder", c.embedder, "Embedder: builtin or remote")
      ->capture_default_str();
  sub->add_option("--dim", c.dim, "Embedding dimension")->capture_default_str();
  sub->add_option("--embed-endpoint", c.embed_endpoint, "Remote embedder endpoint URL");
  sub->add_option("--embed-model", c.embed_model, "Remote embedder model name");
}

void add_http_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--api-key-env", c.api_key_env,
                  "Environment variable holding the API key for remote endpoints")
      ->capture_default_str();
  sub->add_option("--http-timeout", c.http_timeout, "HTTP timeout in seconds")
      ->capture_default_str();
}

void add_common_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  sub->add_option("--run-dir", c.run_dir,
                  "Run directory: snapshots config.json, collects artifacts, and resolves "
                  "relative paths");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detects undesired behavior in process executions by comparing traces "
               "against retrieved known behavior"};
  app.require_subcommand(1);
  RunConfig c;

  CLI::App* build = app.add_subcommand(
      "build-kb", "Populate a knowledge base of desired and deviating traces from process models");
  build->add_option("--models", c.models, "Directory of model files (*.json)")->required();
  build->add_option("--out", c.out, "Knowledge base output file")->required();
  add_common_flags(build, c);
  add_injection_flags(build, c, 0.5);
  add_embedder_flags(build, c);
  add_http_flags(build, c);

  CLI::App* synth = app.add_subcommand(
      "synth-logs", "Generate one event-log bundle with known deviations per model");
  synth->add_option("--models", c.models, "Directory of model files (*.json)")->required();
  synth->add_option("--out", c.out, "Output directory for bundle files")->required();
  add_common_flags(synth, c);
  add_injection_flags(synth, c, 0.55);

  CLI::App* detect = app.add_subcommand(
      "detect", "Analyze every trace of a log against a knowledge base");
  detect->add_option("--log", c.log, "Event log: bundle JSON, plain JSONL, or XES")->required();
  detect->add_option("--kb", c.kb, "Knowledge base file")->required();
  detect->add_option("--backend", c.backend,
                     "Generation backend: oracle, null, heuristic, scripted, or remote "
                     "(default null)");
  detect->add_option("--out", c.out, "Results file (JSON lines, default results.jsonl)");
  detect->add_option("--k", c.k, "Retrieved examples per trace (0 disables retrieval)")
      ->capture_default_str();
  detect->add_option("--n-traces", c.n_traces, "Frequent trace variants in the prompt")
      ->capture_default_str();
  detect->add_option("--activity-threshold", c.activity_threshold,
                     "Minimum support for prompt activities")
      ->capture_default_str();
  detect->add_option("--workers", c.workers, "Worker threads (0 = hardware)")
      ->capture_default_str();
  detect->add_option("--scripted", c.scripted_path, "Reply file for the scripted backend");
  detect->add_option("--endpoint", c.endpoint, "Remote backend endpoint URL");
  detect->add_option("--model", c.model, "Remote backend model name");
  detect->add_option("--temperature", c.temperature, "Sampling temperature")
      ->capture_default_str();
  detect->add_option("--max-tokens", c.max_tokens, "Completion token budget")
      ->capture_default_str();
  detect->add_flag("--no-repair", c.no_repair, "Skip the repair round on malformed replies");
  detect->add_option("--exclude-model", c.exclude_model,
                     "Skip knowledge-base entries from this source model");
  detect->add_option("--format", c.format, "Log format: auto, bundle, jsonl, or xes")
      ->capture_default_str();
  add_common_flags(detect, c);
  add_embedder_flags(detect, c);
  add_http_flags(detect, c);

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score detection results against known deviations");
  evaluate->add_option("--results", c.results, "Results file from detect")->required();
  evaluate->add_option("--truth", c.truth, "Bundle with the known deviations")->required();
  evaluate->add_option("--out", c.out, "Report file (default report.json)");
  evaluate->add_option("--csv", c.csv, "Also export metrics as CSV");
  evaluate->add_option("--labeling", c.labeling,
                       "Conforming category: conforming-positive or deviating-positive")
      ->capture_default_str();
  add_common_flags(evaluate, c);

  CLI::App* stats = app.add_subcommand(
      "stats", "Describe the composition of bundle files");
  stats->add_option("--bundles", c.bundles, "Directory of bundle files")->required();
  stats->add_option("--out", c.out, "Also write the stats as JSON");
  add_common_flags(stats, c);

  CLI::App* bench = app.add_subcommand(
      "bench", "Run the full pipeline over several seeds and report metric spread and timing");
  bench->add_option("--config", c.config_file, "Stored config.json supplying defaults");
  bench->add_option("--models", c.models, "Directory of model files (*.json)");
  bench->add_option("--seeds", c.seeds, "Seeds to run")->delimiter(',')->capture_default_str();
  bench->add_option("--backend", c.backend,
                    "Backend: oracle, null, heuristic, or remote (default oracle)");
  bench->add_option("--out", c.out, "Report file (default report.json)");
  bench->add_option("--k", c.k, "Retrieved examples per trace")->capture_default_str();
  bench->add_option("--n-traces", c.n_traces, "Frequent trace variants in the prompt")
      ->capture_default_str();
  bench->add_option("--activity-threshold", c.activity_threshold,
                    "Minimum support for prompt activities")
      ->capture_default_str();
  bench->add_option("--workers", c.workers, "Worker threads (0 = hardware)")
      ->capture_default_str();
  bench->add_option("--endpoint", c.endpoint, "Remote backend endpoint URL");
  bench->add_option("--model", c.model, "Remote backend model name");
  add_common_flags(bench, c);
  add_injection_flags(bench, c, 0.55);
  add_embedder_flags(bench, c);
  add_http_flags(bench, c);

  CLI11_PARSE(app, argc, argv);

  try {
    // The config struct is shared between subcommands, so per-command
    // runtime defaults apply only when the flag was absent.
    if (build->parsed()) {
      c.command = "build-kb";
      if (build->count("--share") == 0) c.share = 0.5;
      return cmd_build_kb(c);
    }
    if (synth->parsed()) {
      c.command = "synth-logs";
      if (synth->count("--share") == 0) c.share = 0.55;
      return cmd_synth_logs(c);
    }
    if (detect->parsed()) {
      c.command = "detect";
      if (detect->count("--out") == 0) c.out = "results.jsonl";
      return cmd_detect(c);
    }
    if (evaluate->parsed()) {
      c.command = "evaluate";
      if (evaluate->count("--out") == 0) c.out = "report.json";
      return cmd_evaluate(c);
    }
    if (stats->parsed()) {
      c.command = "stats";
      return cmd_stats(c);
    }
    if (bench->parsed()) {
      c.command = "bench";
      if (bench->count("--backend") == 0) c.backend = "oracle";
      if (bench->count("--share") == 0) c.share = 0.55;
      if (bench->count("--out") == 0) c.out = "report.json";
      if (!c.config_file.empty()) apply_config_file(c, bench);
      if (c.models.empty()) throw ContractError("bench needs --models (or a --config that sets it)");
      return cmd_bench(c);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
