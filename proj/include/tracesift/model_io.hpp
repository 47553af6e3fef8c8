#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracesift/core.hpp"

namespace tracesift {

// Structural container for bounded playout. Soundness of the net is the
// producer's problem; only the wellformedness below is verified.
struct WorkflowNet {
  struct Transition {
    std::string id;
    std::optional<Activity> label;  // nullopt = silent
  };

  std::string id;
  std::vector<std::string> places;
  std::vector<Transition> transitions;
  std::vector<std::pair<std::string, std::string>> arcs;  // from -> to
  std::string source;
  std::string sink;
};

// An event log plus the known deviations of every trace (empty = conforming).
struct LogBundle {
  EventLog log;
  std::map<std::string, std::vector<DeviationPattern>> ground_truth;

  LogBundle(EventLog l, std::map<std::string, std::vector<DeviationPattern>> gt);
};

ProcessModel parse_sequence_model(const std::string& document);
ProcessModel parse_sequence_model_file(const std::filesystem::path& path);

WorkflowNet parse_workflow_net(const std::string& document);
WorkflowNet parse_workflow_net_file(const std::filesystem::path& path);

struct PlayoutResult {
  ProcessModel model;
  bool truncated;
};

inline constexpr size_t kDefaultMaxSequences = 100000;
inline constexpr size_t kPlayoutStateBudget = 2000000;

// Enumerates every visible-label firing sequence from {source:1} to {sink:1}
// in which no transition fires more than loop_bound times. Runs that emit no
// visible label are not part of the sequence language.
PlayoutResult playout_net(const WorkflowNet& net, int loop_bound = 2,
                          size_t max_sequences = kDefaultMaxSequences);

enum class LogFormat { Jsonl, Xes };

EventLog read_event_log(const std::filesystem::path& path, LogFormat format);
void write_event_log_jsonl(const EventLog& log, const std::filesystem::path& path);

void write_bundle(const LogBundle& bundle, const std::filesystem::path& path);
LogBundle read_bundle(const std::filesystem::path& path);

nlohmann::ordered_json deviation_to_json(const DeviationPattern& d);
DeviationPattern deviation_from_json(const nlohmann::json& j);

// Optional corpus predicates; not enforced anywhere by default.
bool alphabet_at_least(const ProcessModel& m, size_t n = 5);
// Keeps the first model of every distinct alphabet set, preserving order.
std::vector<ProcessModel> distinct_alphabet_filter(std::vector<ProcessModel> models);

}  // namespace tracesift
