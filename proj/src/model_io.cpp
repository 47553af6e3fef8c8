#include "tracesift/model_io.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "tracesift/errors.hpp"

namespace tracesift {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

int line_of_byte(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what(),
                     line_of_byte(text, e.byte > 0 ? e.byte - 1 : 0));
  }
}

// ---------------------------------------------------------------------------
// Minimal XML reader, enough for the XES subset we interpret. Elements,
// attributes and self-closing tags only; text content, processing
// instructions, comments and doctypes are skipped.

struct XmlNode {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::vector<XmlNode> children;
};

class XmlReader {
 public:
  explicit XmlReader(const std::string& text) : text_(text) {}

  XmlNode parse_document() {
    skip_misc();
    if (pos_ >= text_.size()) throw ParseError("XML document has no root element", line_);
    XmlNode root = parse_element();
    skip_misc();
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw ParseError("XML: " + msg, line_); }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  char take() {
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  bool consume(std::string_view lit) {
    if (text_.compare(pos_, lit.size(), lit) != 0) return false;
    for (size_t i = 0; i < lit.size(); ++i) take();
    return true;
  }

  void skip_ws() {
    while (pos_ < text_.size() && (peek() == ' ' || peek() == '\t' || peek() == '\r' || peek() == '\n'))
      take();
  }

  // Whitespace, comments, PIs, doctype, stray text between elements.
  void skip_misc() {
    for (;;) {
      skip_ws();
      if (consume("<!--")) {
        while (!consume("-->")) take();
      } else if (consume("<?")) {
        while (!consume("?>")) take();
      } else if (text_.compare(pos_, 2, "<!") == 0) {
        while (take() != '>') {
        }
      } else if (pos_ < text_.size() && peek() != '<') {
        take();  // character data we do not interpret
      } else {
        return;
      }
    }
  }

  std::string parse_name() {
    std::string name;
    while (pos_ < text_.size()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '>' || c == '/' || c == '=')
        break;
      name += take();
    }
    if (name.empty()) fail("expected a name");
    return name;
  }

  std::string decode_entities(const std::string& raw) {
    std::string out;
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      size_t semi = raw.find(';', i);
      if (semi == std::string::npos) fail("unterminated entity reference");
      std::string ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") out += '&';
      else if (ent == "lt") out += '<';
      else if (ent == "gt") out += '>';
      else if (ent == "quot") out += '"';
      else if (ent == "apos") out += '\'';
      else if (!ent.empty() && ent[0] == '#') {
        long code = ent[1] == 'x' || ent[1] == 'X' ? std::stol(ent.substr(2), nullptr, 16)
                                                   : std::stol(ent.substr(1));
        // UTF-8 encode; logs in the wild do use non-ASCII labels.
        if (code < 0x80) {
          out += static_cast<char>(code);
        } else if (code < 0x800) {
          out += static_cast<char>(0xC0 | (code >> 6));
          out += static_cast<char>(0x80 | (code & 0x3F));
        } else {
          out += static_cast<char>(0xE0 | (code >> 12));
          out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
          out += static_cast<char>(0x80 | (code & 0x3F));
        }
      } else {
        fail("unknown entity &" + ent + ";");
      }
      i = semi;
    }
    return out;
  }

  XmlNode parse_element() {
    if (!consume("<")) fail("expected '<'");
    XmlNode node;
    node.name = parse_name();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c == '/') {
        take();
        if (!consume(">")) fail("expected '>' after '/'");
        return node;  // self-closing
      }
      if (c == '>') {
        take();
        break;
      }
      std::string attr = parse_name();
      skip_ws();
      if (!consume("=")) fail("expected '=' after attribute " + attr);
      skip_ws();
      char quote = take();
      if (quote != '"' && quote != '\'') fail("attribute value must be quoted");
      std::string raw;
      while (peek() != quote) raw += take();
      take();
      node.attrs[attr] = decode_entities(raw);
    }
    // Children until the matching close tag.
    for (;;) {
      skip_misc();
      if (text_.compare(pos_, 2, "</") == 0) {
        consume("</");
        std::string close = parse_name();
        if (close != node.name)
          fail("mismatched close tag </" + close + "> for <" + node.name + ">");
        skip_ws();
        if (!consume(">")) fail("expected '>' in close tag");
        return node;
      }
      node.children.push_back(parse_element());
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
};

std::optional<std::string> xes_concept_name(const XmlNode& node) {
  for (const auto& child : node.children) {
    if (child.name != "string") continue;
    auto key = child.attrs.find("key");
    auto value = child.attrs.find("value");
    if (key != child.attrs.end() && key->second == "concept:name" && value != child.attrs.end())
      return value->second;
  }
  return std::nullopt;
}

EventLog read_xes(const std::string& text, const std::string& log_name) {
  XmlNode root = XmlReader(text).parse_document();
  if (root.name != "log") throw FormatError("XES root element is <" + root.name + ">, expected <log>");

  std::vector<Trace> traces;
  size_t trace_index = 0;
  for (const auto& node : root.children) {
    if (node.name != "trace") continue;
    std::string id = xes_concept_name(node).value_or("t" + std::to_string(trace_index));
    ActivitySeq acts;
    size_t event_index = 0;
    for (const auto& ev : node.children) {
      if (ev.name != "event") continue;
      auto name = xes_concept_name(ev);
      if (!name)
        throw FormatError("event missing concept:name (trace " + std::to_string(trace_index) +
                          ", event " + std::to_string(event_index) + ")");
      acts.emplace_back(*name);
      ++event_index;
    }
    if (acts.empty())
      throw FormatError("trace " + std::to_string(trace_index) + " has no events");
    traces.emplace_back(std::move(id), std::move(acts));
    ++trace_index;
  }
  return EventLog(log_name, std::move(traces));
}

EventLog read_jsonl(const std::string& text, const std::string& log_name) {
  std::vector<Trace> traces;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  size_t trace_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("event log: ") + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("activities") || !j["activities"].is_array())
      throw FormatError("trace " + std::to_string(trace_index) +
                        " lacks an \"activities\" array (line " + std::to_string(line_no) + ")");
    std::string id = j.contains("id") ? j["id"].get<std::string>()
                                      : "t" + std::to_string(trace_index);
    ActivitySeq acts;
    size_t event_index = 0;
    for (const auto& a : j["activities"]) {
      if (!a.is_string())
        throw FormatError("non-string activity (trace " + std::to_string(trace_index) +
                          ", event " + std::to_string(event_index) + ")");
      acts.emplace_back(a.get<std::string>());
      ++event_index;
    }
    if (acts.empty())
      throw FormatError("trace " + std::to_string(trace_index) + " has no events");
    traces.emplace_back(std::move(id), std::move(acts));
    ++trace_index;
  }
  return EventLog(log_name, std::move(traces));
}

}  // namespace

LogBundle::LogBundle(EventLog l, std::map<std::string, std::vector<DeviationPattern>> gt)
    : log(std::move(l)), ground_truth(std::move(gt)) {
  std::set<std::string> ids;
  for (const auto& t : log.traces()) ids.insert(t.id);
  for (const auto& [id, _] : ground_truth) {
    if (!ids.count(id))
      throw IntegrityError("ground truth references unknown trace id '" + id + "'");
  }
  for (const auto& id : ids) {
    if (!ground_truth.count(id))
      throw IntegrityError("trace '" + id + "' missing from ground truth");
  }
}

ProcessModel parse_sequence_model(const std::string& document) {
  json j = parse_json(document, "sequence model");
  if (!j.is_object() || !j.contains("id") || !j.contains("sequences"))
    throw SchemaError("sequence model needs \"id\" and \"sequences\"");
  std::string id = j["id"].get<std::string>();
  if (!j["sequences"].is_array() || j["sequences"].empty())
    throw SchemaError("model '" + id + "': empty sequence set");

  std::vector<ActivitySeq> seqs;
  std::set<std::vector<std::string>> seen;
  for (const auto& s : j["sequences"]) {
    if (!s.is_array()) throw SchemaError("model '" + id + "': sequence is not an array");
    std::vector<std::string> labels = s.get<std::vector<std::string>>();
    if (!seen.insert(labels).second)
      throw SchemaError("model '" + id + "': duplicate sequence");
    seqs.push_back(to_activities(labels));
  }
  std::vector<Activity> declared;
  if (j.contains("alphabet"))
    for (const auto& a : j["alphabet"]) declared.emplace_back(a.get<std::string>());
  return ProcessModel(std::move(id), std::move(seqs), std::move(declared));
}

ProcessModel parse_sequence_model_file(const std::filesystem::path& path) {
  return parse_sequence_model(slurp(path));
}

WorkflowNet parse_workflow_net(const std::string& document) {
  json j = parse_json(document, "workflow net");
  for (const char* key : {"id", "places", "transitions", "arcs", "source", "sink"})
    if (!j.contains(key)) throw SchemaError(std::string("workflow net missing \"") + key + "\"");

  WorkflowNet net;
  net.id = j["id"].get<std::string>();
  net.places = j["places"].get<std::vector<std::string>>();
  for (const auto& t : j["transitions"]) {
    WorkflowNet::Transition tr;
    tr.id = t.at("id").get<std::string>();
    if (t.contains("label") && !t["label"].is_null())
      tr.label = Activity(t["label"].get<std::string>());
    net.transitions.push_back(std::move(tr));
  }
  for (const auto& a : j["arcs"]) {
    if (!a.is_array() || a.size() != 2)
      throw SchemaError("net '" + net.id + "': arc is not a [from, to] pair");
    net.arcs.emplace_back(a[0].get<std::string>(), a[1].get<std::string>());
  }
  net.source = j["source"].get<std::string>();
  net.sink = j["sink"].get<std::string>();

  // Wellformedness: bipartite arcs over known nodes, declared source/sink
  // with the right degree, everything on some source→sink path.
  std::set<std::string> places(net.places.begin(), net.places.end());
  std::set<std::string> trans;
  for (const auto& t : net.transitions)
    if (!trans.insert(t.id).second)
      throw SchemaError("net '" + net.id + "': duplicate transition id '" + t.id + "'");
  if (places.size() != net.places.size())
    throw SchemaError("net '" + net.id + "': duplicate place id");
  for (const auto& id : net.places)
    if (trans.count(id))
      throw SchemaError("net '" + net.id + "': id '" + id + "' is both place and transition");

  std::set<std::string> with_in, with_out;
  for (const auto& [from, to] : net.arcs) {
    bool from_place = places.count(from), to_place = places.count(to);
    if (!from_place && !trans.count(from))
      throw SchemaError("net '" + net.id + "': arc from unknown node '" + from + "'");
    if (!to_place && !trans.count(to))
      throw SchemaError("net '" + net.id + "': arc to unknown node '" + to + "'");
    if (from_place == to_place)
      throw SchemaError("net '" + net.id + "': arc '" + from + "'→'" + to +
                        "' does not connect a place with a transition");
    with_out.insert(from);
    with_in.insert(to);
  }
  if (!places.count(net.source)) throw SchemaError("net '" + net.id + "': source is not a place");
  if (!places.count(net.sink)) throw SchemaError("net '" + net.id + "': sink is not a place");
  for (const auto& p : net.places) {
    if (!with_in.count(p) && p != net.source)
      throw SchemaError("net '" + net.id + "': place '" + p + "' has no incoming arc but is not the source");
    if (!with_out.count(p) && p != net.sink)
      throw SchemaError("net '" + net.id + "': place '" + p + "' has no outgoing arc but is not the sink");
  }
  if (with_in.count(net.source))
    throw SchemaError("net '" + net.id + "': source has incoming arcs");
  if (with_out.count(net.sink))
    throw SchemaError("net '" + net.id + "': sink has outgoing arcs");

  // Reachability both ways.
  auto reach = [&](const std::string& start, bool forward) {
    std::set<std::string> seen{start};
    std::vector<std::string> stack{start};
    while (!stack.empty()) {
      std::string n = stack.back();
      stack.pop_back();
      for (const auto& [from, to] : net.arcs) {
        const std::string& next = forward ? to : from;
        if ((forward ? from : to) == n && seen.insert(next).second) stack.push_back(next);
      }
    }
    return seen;
  };
  auto fwd = reach(net.source, true);
  auto bwd = reach(net.sink, false);
  for (const auto& p : net.places)
    if (!fwd.count(p) || !bwd.count(p))
      throw SchemaError("net '" + net.id + "': place '" + p + "' is not on a source→sink path");
  for (const auto& t : net.transitions)
    if (!fwd.count(t.id) || !bwd.count(t.id))
      throw SchemaError("net '" + net.id + "': transition '" + t.id + "' is not on a source→sink path");
  return net;
}

WorkflowNet parse_workflow_net_file(const std::filesystem::path& path) {
  return parse_workflow_net(slurp(path));
}

PlayoutResult playout_net(const WorkflowNet& net, int loop_bound, size_t max_sequences) {
  if (loop_bound < 1) throw ContractError("playout_net: loop_bound must be positive");
  if (max_sequences < 1) throw ContractError("playout_net: max_sequences must be positive");

  // Index nodes for dense markings.
  std::map<std::string, size_t> place_idx;
  for (size_t i = 0; i < net.places.size(); ++i) place_idx[net.places[i]] = i;
  const size_t np = net.places.size();
  const size_t nt = net.transitions.size();
  std::vector<std::vector<size_t>> pre(nt), post(nt);
  for (const auto& [from, to] : net.arcs) {
    auto pit = place_idx.find(from);
    if (pit != place_idx.end()) {
      for (size_t t = 0; t < nt; ++t)
        if (net.transitions[t].id == to) pre[t].push_back(pit->second);
    } else {
      auto qit = place_idx.find(to);
      for (size_t t = 0; t < nt; ++t)
        if (net.transitions[t].id == from) post[t].push_back(qit->second);
    }
  }

  std::vector<int> marking(np, 0);
  marking[place_idx.at(net.source)] = 1;
  std::vector<int> final_marking(np, 0);
  final_marking[place_idx.at(net.sink)] = 1;

  std::set<std::vector<std::string>> language;
  bool truncated = false;
  size_t states_visited = 0;
  std::vector<int> fires(nt, 0);
  std::vector<std::string> emitted;

  auto enabled = [&](size_t t) {
    if (fires[t] >= loop_bound) return false;
    for (size_t p : pre[t])
      if (marking[p] < 1) return false;
    return !pre[t].empty();
  };

  std::function<void()> dfs = [&]() {
    if (truncated) return;
    if (++states_visited > kPlayoutStateBudget)
      throw ResourceError("playout of net '" + net.id + "' exceeded the state budget of " +
                          std::to_string(kPlayoutStateBudget) + " visited states");
    if (marking == final_marking) {
      if (!emitted.empty()) {
        language.insert(emitted);
        if (language.size() >= max_sequences) {
          truncated = true;
          return;
        }
      }
      // The sink marking is terminal for a workflow net; a sound net has no
      // outgoing sink arcs, so there is nothing further to fire from here.
      return;
    }
    for (size_t t = 0; t < nt; ++t) {
      if (!enabled(t)) continue;
      for (size_t p : pre[t]) --marking[p];
      for (size_t p : post[t]) ++marking[p];
      ++fires[t];
      bool visible = net.transitions[t].label.has_value();
      if (visible) emitted.push_back(net.transitions[t].label->label());
      dfs();
      if (visible) emitted.pop_back();
      --fires[t];
      for (size_t p : post[t]) --marking[p];
      for (size_t p : pre[t]) ++marking[p];
      if (truncated) return;
    }
  };
  dfs();

  if (language.empty())
    throw EmptyLanguageError("net '" + net.id + "' yields no visible firing sequence within loop bound " +
                             std::to_string(loop_bound));

  std::vector<ActivitySeq> seqs;
  seqs.reserve(language.size());
  for (const auto& labels : language) seqs.push_back(to_activities(labels));
  return {ProcessModel(net.id, std::move(seqs)), truncated};
}

EventLog read_event_log(const std::filesystem::path& path, LogFormat format) {
  std::string text = slurp(path);
  std::string name = path.stem().string();
  return format == LogFormat::Xes ? read_xes(text, name) : read_jsonl(text, name);
}

void write_event_log_jsonl(const EventLog& log, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& t : log.traces()) {
    ordered_json j;
    j["id"] = t.id;
    j["activities"] = to_labels(t.activities);
    out << j.dump() << "\n";
  }
  spill(path, out.str());
}

nlohmann::ordered_json deviation_to_json(const DeviationPattern& d) {
  ordered_json j;
  j["kind"] = std::string(kind_name(d.kind));
  j["fragment_a"] = to_labels(d.fragment_a);
  if (d.kind == DeviationKind::Replace || d.kind == DeviationKind::Swap)
    j["fragment_b"] = to_labels(d.fragment_b);
  if (d.position) j["position"] = *d.position;
  return j;
}

DeviationPattern deviation_from_json(const nlohmann::json& j) {
  auto kind = kind_from_name(j.at("kind").get<std::string>());
  if (!kind) throw SchemaError("unknown deviation kind '" + j.at("kind").get<std::string>() + "'");
  DeviationPattern d{*kind, to_activities(j.at("fragment_a").get<std::vector<std::string>>()), {}, {}};
  if (j.contains("fragment_b") && !j["fragment_b"].is_null())
    d.fragment_b = to_activities(j["fragment_b"].get<std::vector<std::string>>());
  if (j.contains("position") && !j["position"].is_null())
    d.position = j["position"].get<int>();
  if (auto bad = validate_pattern(d)) throw SchemaError("invalid deviation: " + *bad);
  return d;
}

void write_bundle(const LogBundle& bundle, const std::filesystem::path& path) {
  ordered_json j;
  j["log"]["name"] = bundle.log.name();
  auto& traces = j["log"]["traces"];
  traces = ordered_json::array();
  for (const auto& t : bundle.log.traces()) {
    ordered_json tj;
    tj["id"] = t.id;
    tj["activities"] = to_labels(t.activities);
    traces.push_back(std::move(tj));
  }
  auto& gt = j["ground_truth"];
  gt = ordered_json::object();
  // Log order, not map order: byte determinism should not depend on how the
  // ground-truth container sorts.
  for (const auto& t : bundle.log.traces()) {
    auto list = ordered_json::array();
    for (const auto& d : bundle.ground_truth.at(t.id)) list.push_back(deviation_to_json(d));
    gt[t.id] = std::move(list);
  }
  spill(path, j.dump(2) + "\n");
}

LogBundle read_bundle(const std::filesystem::path& path) {
  std::string text = slurp(path);
  json j = parse_json(text, "log bundle");
  if (!j.contains("log") || !j.contains("ground_truth"))
    throw SchemaError("log bundle needs \"log\" and \"ground_truth\"");

  std::vector<Trace> traces;
  for (const auto& tj : j["log"]["traces"]) {
    traces.emplace_back(tj.at("id").get<std::string>(),
                        to_activities(tj.at("activities").get<std::vector<std::string>>()));
  }
  EventLog log(j["log"].value("name", path.stem().string()), std::move(traces));

  std::map<std::string, std::vector<DeviationPattern>> gt;
  for (const auto& [id, list] : j["ground_truth"].items()) {
    std::vector<DeviationPattern> ds;
    for (const auto& dj : list) ds.push_back(deviation_from_json(dj));
    gt.emplace(id, std::move(ds));
  }
  return LogBundle(std::move(log), std::move(gt));  // ctor enforces key integrity
}

bool alphabet_at_least(const ProcessModel& m, size_t n) {
  return m.alphabet().size() >= n;
}

std::vector<ProcessModel> distinct_alphabet_filter(std::vector<ProcessModel> models) {
  std::set<std::vector<Activity>> seen;
  std::vector<ProcessModel> out;
  for (auto& m : models)
    if (seen.insert(m.alphabet()).second) out.push_back(std::move(m));
  return out;
}

}  // namespace tracesift
