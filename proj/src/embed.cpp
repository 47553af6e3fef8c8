#include "tracesift/embed.hpp"

#include <cmath>

#include "tracesift/errors.hpp"
#include "tracesift/rng.hpp"

namespace tracesift {

namespace {

std::string escape_label(const std::string& label) {
  std::string out;
  out.reserve(label.size());
  for (char c : label) {
    if (c == '\\' || c == ',') out += '\\';
    out += c;
  }
  return out;
}

std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
  return s;
}

void add_feature(std::vector<double>& acc, const std::string& feature) {
  uint64_t h = fnv1a64(feature);
  size_t bucket = static_cast<size_t>(h % acc.size());
  acc[bucket] += (h >> 63) ? -1.0 : 1.0;
}

}  // namespace

std::string to_sentence(const ActivitySeq& activities) {
  std::string out;
  for (size_t i = 0; i < activities.size(); ++i) {
    if (i) out += ", ";
    out += escape_label(activities[i].label());
  }
  return out;
}

std::string trace_to_sentence(const Trace& t) { return to_sentence(t.activities); }

std::vector<std::string> sentence_to_labels(const std::string& sentence) {
  std::vector<std::string> out;
  if (sentence.empty()) return out;
  std::string current;
  for (size_t i = 0; i < sentence.size(); ++i) {
    char c = sentence[i];
    if (c == '\\' && i + 1 < sentence.size()) {
      current += sentence[++i];
      continue;
    }
    if (c == ',') {
      out.push_back(current);
      current.clear();
      // The joiner is ", "; tolerate a missing space after the comma.
      if (i + 1 < sentence.size() && sentence[i + 1] == ' ') ++i;
      continue;
    }
    current += c;
  }
  out.push_back(current);
  return out;
}

Embedding hashed_ngram_embed(const std::string& sentence, size_t dim) {
  if (dim < 2) throw ContractError("hashed_ngram_embed: dim must be at least 2");

  std::vector<double> acc(dim, 0.0);
  auto labels = sentence_to_labels(sentence);

  std::vector<std::string> lowered;
  lowered.reserve(labels.size());
  for (const auto& l : labels) lowered.push_back(ascii_lower(l));

  bool any = false;
  for (const auto& label : lowered) {
    size_t i = 0;
    while (i < label.size()) {
      while (i < label.size() && (label[i] == ' ' || label[i] == '\t')) ++i;
      size_t start = i;
      while (i < label.size() && label[i] != ' ' && label[i] != '\t') ++i;
      if (i > start) {
        add_feature(acc, label.substr(start, i - start));
        any = true;
      }
    }
  }
  for (size_t i = 0; i + 1 < lowered.size(); ++i) {
    add_feature(acc, lowered[i] + "→" + lowered[i + 1]);
    any = true;
  }

  if (!any) return {std::move(acc)};  // zero vector for the degenerate case

  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& v : acc) v /= norm;
  return {std::move(acc)};
}

double cosine(const Embedding& u, const Embedding& v) {
  if (u.dim() != v.dim())
    throw ContractError("cosine: dimension mismatch (" + std::to_string(u.dim()) + " vs " +
                        std::to_string(v.dim()) + ")");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (size_t i = 0; i < u.values.size(); ++i) {
    dot += u.values[i] * v.values[i];
    nu += u.values[i] * u.values[i];
    nv += v.values[i] * v.values[i];
  }
  if (nu == 0.0 || nv == 0.0)
    throw ZeroNormError("cosine is undefined for a zero-norm embedding");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

HashedNgramEmbedder::HashedNgramEmbedder(size_t dim)
    : dim_(dim), name_("hashed-ngram-v1/d" + std::to_string(dim)) {
  if (dim < 2) throw ContractError("HashedNgramEmbedder: dim must be at least 2");
}

Embedding HashedNgramEmbedder::embed(const std::string& sentence) const {
  return hashed_ngram_embed(sentence, dim_);
}

}  // namespace tracesift
