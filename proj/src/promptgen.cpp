#include "tracesift/promptgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tracesift/embed.hpp"
#include "tracesift/errors.hpp"

namespace tracesift {

LogContext extract_log_context(const EventLog& log, size_t n_traces,
                               double activity_threshold) {
  if (log.size() == 0) throw ContractError("cannot extract context from an empty log");
  LogContext ctx;
  ctx.n_traces = n_traces;
  ctx.activity_threshold = activity_threshold;

  struct VariantInfo {
    size_t count = 0;
    size_t first = 0;
  };
  std::map<ActivitySeq, VariantInfo> variants;
  std::map<Activity, size_t> containing;  // traces containing the activity
  for (size_t i = 0; i < log.traces().size(); ++i) {
    const auto& t = log.traces()[i];
    auto [it, fresh] = variants.try_emplace(t.activities, VariantInfo{0, i});
    it->second.count++;
    (void)fresh;
    std::set<Activity> seen(t.activities.begin(), t.activities.end());
    for (const auto& a : seen) containing[a]++;
  }

  std::vector<std::pair<ActivitySeq, VariantInfo>> ordered(variants.begin(), variants.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });
  for (const auto& [seq, info] : ordered) {
    if (ctx.frequent_traces.size() == n_traces) break;
    ctx.frequent_traces.emplace_back(seq, info.count);
  }

  const double total = static_cast<double>(log.size());
  for (const auto& [a, c] : containing) {
    double support = static_cast<double>(c) / total;
    if (support >= activity_threshold) ctx.frequent_activities.emplace_back(a, support);
  }
  std::sort(ctx.frequent_activities.begin(), ctx.frequent_activities.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  return ctx;
}

namespace {

constexpr const char* kTemplateText = R"(You are an analyst for business process executions. Given the recorded
activity sequence of one process instance, identify any undesired behavior
in it.

Undesired behavior surfaces as one or more of these deviation patterns,
where a fragment is one or multiple consecutive activities:
- Insert(['X']): the fragment was executed although it should not have been.
- Skip(['X']): the fragment that should have been executed is missing.
- Repeat(['X']): the fragment was executed again immediately after itself.
- Replace(['X'], ['Y']): the expected fragment ['X'] was replaced by the
  executed fragment ['Y'].
- Swap(['X'], ['Y']): the two fragments were executed at each other's
  position.

Report every deviation you find as a comma-separated list of such terms,
for example: Insert(['Pay Invoice']), Swap(['Approve Order'], ['Archive']).
If the sequence shows no undesired behavior, answer exactly:
No Deviation.

---
Activity sequence to analyze:
{{activity_sequence}}

---
Log context.
Most frequent traces of the analyzed log, with occurrence counts; frequent
behavior is usually desired:
{{frequent_traces}}
Activities that occur in a large share of the log's traces:
{{frequent_activities}}

---
Similar traces with known assessments:
{{examples}}
)";

void require_placeholder(const std::string& part, const std::string& name) {
  if (part.find("{{" + name + "}}") == std::string::npos)
    throw FormatError("template is missing the {{" + name + "}} placeholder");
}

// Replaces known {{name}} slots in one pass; substituted text is never
// rescanned, so labels containing placeholder syntax stay inert.
std::string substitute(const std::string& part,
                       const std::vector<std::pair<std::string, std::string>>& slots) {
  std::string out;
  out.reserve(part.size());
  size_t i = 0;
  while (i < part.size()) {
    size_t open = part.find("{{", i);
    if (open == std::string::npos) {
      out.append(part, i, std::string::npos);
      break;
    }
    size_t close = part.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(part, i, std::string::npos);
      break;
    }
    out.append(part, i, open - i);
    std::string name = part.substr(open + 2, close - open - 2);
    bool known = false;
    for (const auto& [slot, value] : slots) {
      if (slot == name) {
        out += value;
        known = true;
        break;
      }
    }
    if (!known) out.append(part, open, close + 2 - open);  // leave literal
    i = close + 2;
  }
  return out;
}

}  // namespace

PromptTemplate parse_template(const std::string& text) {
  std::vector<std::string> parts(1);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line == "---") {
      parts.emplace_back();
    } else {
      parts.back() += line;
      parts.back() += '\n';
    }
  }
  if (parts.size() != 4)
    throw FormatError("template must have exactly 4 sections separated by --- lines, got " +
                      std::to_string(parts.size()));
  PromptTemplate tpl{std::move(parts[0]), std::move(parts[1]), std::move(parts[2]),
                     std::move(parts[3])};
  require_placeholder(tpl.activity_sequence, "activity_sequence");
  require_placeholder(tpl.log_context, "frequent_traces");
  require_placeholder(tpl.log_context, "frequent_activities");
  require_placeholder(tpl.retrieved_examples, "examples");
  return tpl;
}

PromptTemplate load_template_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open template " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_template(text);
}

const std::string& default_template_text() {
  static const std::string text = kTemplateText;
  return text;
}

const PromptTemplate& default_template() {
  static const PromptTemplate tpl = parse_template(default_template_text());
  return tpl;
}

std::filesystem::path default_template_path() {
  return std::filesystem::path(TRACESIFT_RESOURCE_DIR) / "prompt_template_v1.txt";
}

std::vector<ExampleRef> to_examples(const KnowledgeBase& kb,
                                    const std::vector<RetrievalHit>& hits) {
  std::vector<ExampleRef> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(ExampleRef{&kb.entries()[h.index], h.similarity});
  return out;
}

namespace {

std::string quoted_list(const ActivitySeq& frag) {
  std::string out;
  for (size_t i = 0; i < frag.size(); ++i) {
    if (i) out += ", ";
    out += "'" + frag[i].label() + "'";
  }
  return out;
}

}  // namespace

std::string annotate_deviation(const DeviationPattern& d) {
  switch (d.kind) {
    case DeviationKind::Insert: return "Inserted: " + quoted_list(d.fragment_a);
    case DeviationKind::Skip: return "Skipped: " + quoted_list(d.fragment_a);
    case DeviationKind::Repeat: return "Repeated: " + quoted_list(d.fragment_a);
    case DeviationKind::Replace:
      return "Replaced: " + quoted_list(d.fragment_a) + " with " + quoted_list(d.fragment_b);
    case DeviationKind::Swap:
      return "Swapped: " + quoted_list(d.fragment_a) + " with " + quoted_list(d.fragment_b);
  }
  return "?";
}

std::string annotate_deviations(const std::vector<DeviationPattern>& ds) {
  std::string out;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (i) out += "; ";
    out += annotate_deviation(ds[i]);
  }
  return out;
}

PromptBundle render_prompt(const Trace& t, const LogContext& ctx,
                           const std::vector<ExampleRef>& examples,
                           const PromptTemplate& tpl) {
  PromptBundle b;
  b.trace_id = t.id;
  b.sections.task_description = tpl.task_description;
  b.sections.activity_sequence = substitute(
      tpl.activity_sequence, {{"activity_sequence", to_sentence(t.activities)}});

  if (!ctx.frequent_traces.empty() || !ctx.frequent_activities.empty()) {
    std::string traces;
    for (const auto& [seq, count] : ctx.frequent_traces) {
      if (!traces.empty()) traces += '\n';
      traces += "- " + to_sentence(seq) + " (" + std::to_string(count) + ")";
    }
    if (traces.empty()) traces = "(none)";
    std::string acts;
    for (const auto& [a, support] : ctx.frequent_activities) {
      if (!acts.empty()) acts += '\n';
      acts += "- " + a.label() + " (" + std::to_string(std::llround(support * 100.0)) + "%)";
    }
    if (acts.empty()) acts = "(none)";
    b.sections.log_context = substitute(
        tpl.log_context, {{"frequent_traces", traces}, {"frequent_activities", acts}});
  }

  if (!examples.empty()) {
    std::string ex;
    for (const auto& e : examples) {
      if (!ex.empty()) ex += "\n\n";
      ex += "Trace: " + trace_to_sentence(e.entry->trace) + "\nAssessment: ";
      ex += e.entry->deviations.empty() ? std::string("No Deviation.")
                                        : annotate_deviations(e.entry->deviations);
    }
    b.sections.retrieved_examples = substitute(tpl.retrieved_examples, {{"examples", ex}});
  }

  b.rendered = b.sections.task_description + b.sections.activity_sequence +
               b.sections.log_context + b.sections.retrieved_examples;
  return b;
}

}  // namespace tracesift
