#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracesift/core.hpp"

namespace tracesift {

// A shipped test dataset, materialized on demand. Every numeric value a
// manifest declares carries a source note ("published" for values that
// follow an externally published shape, "synthetic" for invented content)
// and is recomputed from the materialized files on every load.
struct Fixture {
  std::string name;
  std::vector<std::string> files;  // file names relative to dir
  std::filesystem::path dir;       // where the files were materialized
  nlohmann::ordered_json manifest;
};

std::vector<std::string> list_fixtures();

// Copies the named fixture into dest (default: a fresh temporary directory)
// and verifies its manifest against the copied files.
Fixture load_fixture(const std::string& name);
Fixture load_fixture(const std::string& name, const std::filesystem::path& dest);

// Re-runs the manifest checks against an already materialized directory.
// Throws IoError when the files no longer match the declared shape.
void verify_fixture(const std::string& name, const std::filesystem::path& dir);

// Reply queues for ScriptedBackend, stored as {"trace id": ["reply", ...]}.
std::map<std::string, std::vector<std::string>> read_scripted_replies(
    const std::filesystem::path& path);

// The pinned walkthrough prompt whose byte-exact rendering the
// bpic19-context fixture stores as its golden file: one consignment-style
// trace rendered against the log's own context and one retrieved example.
std::string context_walkthrough_prompt(const EventLog& log);

}  // namespace tracesift
