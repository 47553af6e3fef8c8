#pragma once

#include <string>
#include <vector>

#include "tracesift/core.hpp"

namespace tracesift {

// Fixed-dimension vector; the built-in embedder emits unit-length vectors
// except for the degenerate empty-feature case (all zeros).
struct Embedding {
  std::vector<double> values;

  size_t dim() const { return values.size(); }
};

// Sentence form of a trace: activities joined with ", ". Commas inside a
// label are escaped as "\," so the sentence splits back losslessly.
std::string to_sentence(const ActivitySeq& activities);
std::string trace_to_sentence(const Trace& t);
std::vector<std::string> sentence_to_labels(const std::string& sentence);

// Deterministic feature-hashing embedder: lowercase word unigrams per label
// plus whole-label bigrams "α→β" over adjacent activities, signed buckets,
// L2-normalized.
Embedding hashed_ngram_embed(const std::string& sentence, size_t dim = 256);

double cosine(const Embedding& u, const Embedding& v);

// Pluggable embedder slot. Implementations must be deterministic for a
// fixed configuration and safe to call concurrently.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual const std::string& name() const = 0;
  virtual size_t dim() const = 0;
  virtual Embedding embed(const std::string& sentence) const = 0;
};

class HashedNgramEmbedder final : public Embedder {
 public:
  explicit HashedNgramEmbedder(size_t dim = 256);
  const std::string& name() const override { return name_; }
  size_t dim() const override { return dim_; }
  Embedding embed(const std::string& sentence) const override;

 private:
  size_t dim_;
  std::string name_;
};

}  // namespace tracesift
