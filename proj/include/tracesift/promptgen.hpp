#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tracesift/core.hpp"
#include "tracesift/kb.hpp"

namespace tracesift {

// What the analyzed log itself tells us: its most frequent trace variants
// and the activities that occur in a large share of traces.
struct LogContext {
  std::vector<std::pair<ActivitySeq, size_t>> frequent_traces;   // count desc
  std::vector<std::pair<Activity, double>> frequent_activities;  // support desc
  size_t n_traces = 3;
  double activity_threshold = 0.10;
};

// Variants are counted by activity sequence; count ties keep log order.
// Support is the fraction of traces containing the activity at least once;
// the threshold comparison is inclusive.
LogContext extract_log_context(const EventLog& log, size_t n_traces = 3,
                               double activity_threshold = 0.10);

// Four-part prompt template. Parts are separated by lines consisting of
// exactly "---" in the file form; each dynamic part carries named
// {{placeholder}} slots that must be present.
struct PromptTemplate {
  std::string task_description;       // static
  std::string activity_sequence;      // needs {{activity_sequence}}
  std::string log_context;            // needs {{frequent_traces}}, {{frequent_activities}}
  std::string retrieved_examples;     // needs {{examples}}
};

PromptTemplate parse_template(const std::string& text);
PromptTemplate load_template_file(const std::filesystem::path& path);
const PromptTemplate& default_template();
const std::string& default_template_text();
std::filesystem::path default_template_path();

struct PromptSections {
  std::string task_description;
  std::string activity_sequence;
  std::string log_context;
  std::string retrieved_examples;
};

struct PromptBundle {
  std::string trace_id;
  std::string rendered;  // exact concatenation of the four section texts
  PromptSections sections;
};

struct ExampleRef {
  const KbEntry* entry;
  double similarity;
};

std::vector<ExampleRef> to_examples(const KnowledgeBase& kb,
                                    const std::vector<RetrievalHit>& hits);

// Human-readable annotation of one known deviation, e.g.
// "Skipped: 'Receive Goods'" or "Replaced: 'A' with 'B'".
std::string annotate_deviation(const DeviationPattern& d);
std::string annotate_deviations(const std::vector<DeviationPattern>& ds);

// Fills the template for one trace. The log-context part is dropped when
// both lists are empty and the examples part when there are none; a single
// empty list inside a retained part renders as "(none)".
PromptBundle render_prompt(const Trace& t, const LogContext& ctx,
                           const std::vector<ExampleRef>& examples,
                           const PromptTemplate& tpl = default_template());

}  // namespace tracesift
