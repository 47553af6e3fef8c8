#include "tracesift/fixtures.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "tracesift/embed.hpp"
#include "tracesift/errors.hpp"
#include "tracesift/evalx.hpp"
#include "tracesift/kb.hpp"
#include "tracesift/model_io.hpp"
#include "tracesift/promptgen.hpp"

namespace tracesift {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

fs::path fixtures_root() { return fs::path(TRACESIFT_RESOURCE_DIR) / "fixtures"; }

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) throw IoError(path.string() + " is not valid JSON");
  return parsed;
}

fs::path make_temp_dir() {
  std::random_device rd;
  const fs::path base = fs::temp_directory_path();
  for (int attempt = 0; attempt < 64; ++attempt) {
    const fs::path candidate = base / ("tracesift-fixture-" + std::to_string(rd()));
    std::error_code ec;
    if (fs::create_directories(candidate, ec) && !ec) return candidate;
  }
  throw IoError("could not create a temporary fixture directory");
}

// Manifest shape: {"name", "files", "synthetic_content", "checks"} where
// every check is {"value": ..., "source": "published"|"synthetic"|...}.
void validate_manifest_schema(const json& manifest, const std::string& name) {
  const auto fail = [&](const std::string& what) {
    throw IoError("fixture " + name + ": manifest " + what);
  };
  if (!manifest.is_object()) fail("is not an object");
  if (!manifest.contains("name") || manifest.at("name") != name) fail("names a different fixture");
  if (!manifest.contains("files") || !manifest.at("files").is_array() ||
      manifest.at("files").empty()) {
    fail("lists no files");
  }
  if (!manifest.contains("checks") || !manifest.at("checks").is_object()) fail("has no checks");
  for (const auto& [key, entry] : manifest.at("checks").items()) {
    if (!entry.is_object() || !entry.contains("value")) fail("check " + key + " has no value");
    if (!entry.contains("source") || !entry.at("source").is_string() ||
        entry.at("source").get<std::string>().empty()) {
      fail("check " + key + " has no source note");
    }
  }
}

const json& check_value(const json& manifest, const std::string& key, const std::string& name) {
  const json& checks = manifest.at("checks");
  if (!checks.contains(key)) {
    throw IoError("fixture " + name + ": manifest lacks the " + key + " check");
  }
  return checks.at(key).at("value");
}

void require_equal(const json& manifest, const std::string& key, const json& computed,
                   const std::string& name) {
  const json& declared = check_value(manifest, key, name);
  if (declared != computed) {
    throw IoError("fixture " + name + ": " + key + " recomputes to " + computed.dump() +
                  " but the manifest declares " + declared.dump());
  }
}

void verify_p2p_shape(const json& manifest, const fs::path& dir) {
  const std::string name = "p2p-shape";
  const LogBundle bundle = read_bundle(dir / "bundle.json");
  const DescriptiveStats stats = descriptive_stats({bundle});
  require_equal(manifest, "traces", stats.traces, name);
  require_equal(manifest, "conforming", stats.conforming, name);
  require_equal(manifest, "deviating", stats.deviating, name);
  require_equal(manifest, "deviations", stats.deviations, name);
  require_equal(manifest, "avg_deviations_display", stats.avg_display(), name);
  for (int k = 0; k < kDeviationKindCount; ++k) {
    const auto kind = static_cast<DeviationKind>(k);
    require_equal(manifest, std::string(kind_name(kind)), stats.per_kind[static_cast<size_t>(k)], name);
  }
}

void verify_bpic19_context(const json& manifest, const fs::path& dir) {
  const std::string name = "bpic19-context";
  const EventLog log = read_event_log(dir / "log.jsonl", LogFormat::Jsonl);
  require_equal(manifest, "traces", log.traces().size(), name);

  const LogContext ctx = extract_log_context(log, 3, 0.10);
  const json& expected = check_value(manifest, "top_traces", name);
  if (!expected.is_array() || ctx.frequent_traces.size() != expected.size()) {
    throw IoError("fixture " + name + ": the log has " +
                  std::to_string(ctx.frequent_traces.size()) +
                  " top variants but the manifest declares " + std::to_string(expected.size()));
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    const json& entry = expected[i];
    for (const char* field : {"activities", "count", "activities_source", "count_source"}) {
      if (!entry.contains(field)) {
        throw IoError("fixture " + name + ": top variant " + std::to_string(i + 1) +
                      " lacks its " + field + " field");
      }
    }
    json labels = json::array();
    for (const Activity& a : ctx.frequent_traces[i].first) labels.push_back(a.label());
    if (entry.at("activities") != labels ||
        entry.at("count") != json(ctx.frequent_traces[i].second)) {
      throw IoError("fixture " + name + ": top variant " + std::to_string(i + 1) +
                    " recomputes to " + labels.dump() + " x" +
                    std::to_string(ctx.frequent_traces[i].second) +
                    ", which is not what the manifest declares");
    }
  }

  const auto replies = read_scripted_replies(dir / "scripted_replies.json");
  require_equal(manifest, "scripted_traces", replies.size(), name);
  for (const auto& [trace_id, queue] : replies) {
    const bool known = std::any_of(log.traces().begin(), log.traces().end(),
                                   [&](const Trace& t) { return t.id == trace_id; });
    if (!known) {
      throw IoError("fixture " + name + ": scripted reply for unknown trace \"" + trace_id + "\"");
    }
    if (queue.empty()) {
      throw IoError("fixture " + name + ": empty reply queue for trace \"" + trace_id + "\"");
    }
  }

  if (read_text_file(dir / "golden_prompt.txt") != context_walkthrough_prompt(log)) {
    throw IoError("fixture " + name + ": golden_prompt.txt no longer matches its rendering");
  }
}

}  // namespace

std::vector<std::string> list_fixtures() { return {"p2p-shape", "bpic19-context"}; }

std::map<std::string, std::vector<std::string>> read_scripted_replies(const fs::path& path) {
  const json parsed = read_json_file(path);
  if (!parsed.is_object()) throw IoError(path.string() + " is not a JSON object");
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [trace_id, queue] : parsed.items()) {
    if (!queue.is_array()) {
      throw IoError(path.string() + ": replies for \"" + trace_id + "\" are not an array");
    }
    std::vector<std::string> replies;
    for (const json& r : queue) {
      if (!r.is_string()) {
        throw IoError(path.string() + ": replies for \"" + trace_id + "\" are not all strings");
      }
      replies.push_back(r.get<std::string>());
    }
    out.emplace(trace_id, std::move(replies));
  }
  return out;
}

std::string context_walkthrough_prompt(const EventLog& log) {
  const Trace analyzed("bpic19/t2",
                       {Activity("Create PO Item"), Activity("Change Storage Location"),
                        Activity("Record GR")});
  const KbEntry example{
      Trace("kb/consignment-001",
            {Activity("Create PO Item"), Activity("Record Invoice Receipt")}),
      Embedding{{1.0}},
      {DeviationPattern::skip({Activity("Receive Goods")})},
      "consignment-reference"};
  const std::vector<ExampleRef> examples{{&example, 0.87}};
  return render_prompt(analyzed, extract_log_context(log, 3, 0.10), examples).rendered;
}

void verify_fixture(const std::string& name, const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  validate_manifest_schema(manifest, name);
  for (const json& file : manifest.at("files")) {
    const fs::path path = dir / file.get<std::string>();
    if (!fs::exists(path)) {
      throw IoError("fixture " + name + ": missing file " + path.string());
    }
  }
  if (name == "p2p-shape") {
    verify_p2p_shape(manifest, dir);
  } else if (name == "bpic19-context") {
    verify_bpic19_context(manifest, dir);
  } else {
    throw ContractError("unknown fixture \"" + name + "\"");
  }
}

Fixture load_fixture(const std::string& name, const fs::path& dest) {
  const auto known = list_fixtures();
  if (std::find(known.begin(), known.end(), name) == known.end()) {
    throw ContractError("unknown fixture \"" + name + "\"");
  }
  const fs::path source = fixtures_root() / name;
  if (!fs::exists(source / "manifest.json")) {
    throw IoError("fixture " + name + " is not installed at " + source.string());
  }
  const json manifest = read_json_file(source / "manifest.json");
  validate_manifest_schema(manifest, name);

  fs::create_directories(dest);
  Fixture out;
  out.name = name;
  out.dir = dest;
  out.manifest = manifest;
  std::vector<std::string> files;
  for (const json& file : manifest.at("files")) files.push_back(file.get<std::string>());
  files.push_back("manifest.json");
  for (const std::string& file : files) {
    if (!fs::exists(source / file)) {
      throw IoError("fixture " + name + ": missing file " + (source / file).string());
    }
    fs::copy_file(source / file, dest / file, fs::copy_options::overwrite_existing);
  }
  out.files = std::move(files);
  verify_fixture(name, dest);
  return out;
}

Fixture load_fixture(const std::string& name) { return load_fixture(name, make_temp_dir()); }

}  // namespace tracesift
