#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tracesift/core.hpp"
#include "tracesift/embed.hpp"
#include "tracesift/loggen.hpp"
#include "tracesift/model_io.hpp"

namespace tracesift {

// One remembered execution: the trace, its embedding, and what is known to
// be wrong with it (nothing = desired behavior).
struct KbEntry {
  Trace trace;
  Embedding embedding;
  std::vector<DeviationPattern> deviations;
  std::string source_model;
};

struct KbStats {
  uint64_t desired = 0;
  uint64_t deviating = 0;
  std::array<uint64_t, kDeviationKindCount> per_kind{};

  bool operator==(const KbStats&) const = default;
};

KbStats compute_kb_stats(const std::vector<KbEntry>& entries);

// Immutable after construction; concurrent queries are safe. Embedding
// values are quantized to f32 on construction so that persisting and
// reloading reproduces the exact in-memory value.
class KnowledgeBase {
 public:
  KnowledgeBase(std::string embedder_name, size_t dim, std::vector<KbEntry> entries);

  const std::string& embedder_name() const { return embedder_name_; }
  size_t dim() const { return dim_; }
  const std::vector<KbEntry>& entries() const { return entries_; }
  const KbStats& stats() const { return stats_; }

 private:
  std::string embedder_name_;
  size_t dim_;
  std::vector<KbEntry> entries_;
  KbStats stats_;
};

// Populates a knowledge base from every model: seeded log generation with a
// balanced half of the traces mutated, then one entry per trace. Entries
// keep model order, then trace order.
KnowledgeBase build_kb(const std::vector<ProcessModel>& models, const InjectionConfig& cfg,
                       const Embedder& embedder);

struct RetrievalHit {
  size_t index;  // position in kb.entries()
  double similarity;
};

// Exact top-k by cosine: full scan, descending similarity, ties broken by
// ascending entry index. Entries from exclude_source_model are skipped, as
// are entries whose stored embedding has zero norm (unrankable).
std::vector<RetrievalHit> retrieve_top_k(
    const KnowledgeBase& kb, const Embedding& query, size_t k = 5,
    const std::optional<std::string>& exclude_source_model = std::nullopt);

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);
KnowledgeBase load_kb(const std::filesystem::path& path);

}  // namespace tracesift
