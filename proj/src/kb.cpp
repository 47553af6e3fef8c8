#include "tracesift/kb.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tracesift/errors.hpp"
#include "tracesift/rng.hpp"

namespace tracesift {

KbStats compute_kb_stats(const std::vector<KbEntry>& entries) {
  KbStats s;
  for (const auto& e : entries) {
    if (e.deviations.empty()) {
      s.desired++;
    } else {
      s.deviating++;
      for (const auto& d : e.deviations) s.per_kind[static_cast<size_t>(d.kind)]++;
    }
  }
  return s;
}

KnowledgeBase::KnowledgeBase(std::string embedder_name, size_t dim,
                             std::vector<KbEntry> entries)
    : embedder_name_(std::move(embedder_name)), dim_(dim), entries_(std::move(entries)) {
  if (dim_ == 0) throw ContractError("knowledge base dimension must be positive");
  for (auto& e : entries_) {
    if (e.embedding.dim() != dim_)
      throw ContractError("entry embedding dimension " + std::to_string(e.embedding.dim()) +
                          " does not match knowledge base dimension " + std::to_string(dim_));
    for (double& v : e.embedding.values) v = static_cast<double>(static_cast<float>(v));
    if (auto bad = [&] {
          for (const auto& d : e.deviations)
            if (auto msg = validate_pattern(d)) return msg;
          return std::optional<std::string>{};
        }())
      throw ContractError("entry " + e.trace.id + ": " + *bad);
  }
  stats_ = compute_kb_stats(entries_);
}

KnowledgeBase build_kb(const std::vector<ProcessModel>& models, const InjectionConfig& cfg,
                       const Embedder& embedder) {
  if (models.empty()) throw ContractError("build_kb needs at least one model");
  InjectionConfig balanced = cfg;
  balanced.deviating_share = 0.5;  // half desired, half mutated
  std::vector<KbEntry> entries;
  for (const auto& m : models) {
    auto res = generate_bundle(m, balanced);
    for (const auto& t : res.bundle.log.traces()) {
      Embedding emb = embedder.embed(trace_to_sentence(t));
      if (emb.dim() != embedder.dim())
        throw ContractError("embedder returned dimension " + std::to_string(emb.dim()) +
                            ", declared " + std::to_string(embedder.dim()));
      entries.push_back(KbEntry{t, std::move(emb), res.bundle.ground_truth.at(t.id), m.id()});
    }
  }
  return KnowledgeBase(embedder.name(), embedder.dim(), std::move(entries));
}

namespace {

double norm_of(const Embedding& e) {
  double s = 0.0;
  for (double v : e.values) s += v * v;
  return std::sqrt(s);
}

}  // namespace

std::vector<RetrievalHit> retrieve_top_k(const KnowledgeBase& kb, const Embedding& query,
                                         size_t k,
                                         const std::optional<std::string>& exclude_source_model) {
  if (k == 0) throw ContractError("k must be positive");
  if (query.dim() != kb.dim())
    throw ContractError("query dimension " + std::to_string(query.dim()) +
                        " does not match knowledge base dimension " +
                        std::to_string(kb.dim()));
  double qn = norm_of(query);
  if (qn == 0.0) throw ZeroNormError("query embedding has zero norm");

  std::vector<RetrievalHit> hits;
  hits.reserve(kb.entries().size());
  for (size_t i = 0; i < kb.entries().size(); ++i) {
    const KbEntry& e = kb.entries()[i];
    if (exclude_source_model && e.source_model == *exclude_source_model) continue;
    double en = norm_of(e.embedding);
    if (en == 0.0) continue;
    double dot = 0.0;
    for (size_t j = 0; j < query.values.size(); ++j)
      dot += query.values[j] * e.embedding.values[j];
    double sim = std::clamp(dot / (qn * en), -1.0, 1.0);
    hits.push_back(RetrievalHit{i, sim});
  }
  auto better = [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.index < b.index;
  };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<ptrdiff_t>(k), hits.end(),
                      better);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), better);
  }
  return hits;
}

namespace {

constexpr char kMagic[4] = {'T', 'S', 'K', 'B'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) { le(v, 2); }
  void u32(uint32_t v) { le(v, 4); }
  void u64(uint64_t v) { le(v, 8); }
  void i32(int32_t v) { le(static_cast<uint32_t>(v), 4); }
  void f32(float v) { le(std::bit_cast<uint32_t>(v), 4); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& bytes() const { return buf_; }

 private:
  void le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint16_t u16() { return static_cast<uint16_t>(le(2)); }
  uint32_t u32() { return static_cast<uint32_t>(le(4)); }
  uint64_t u64() { return le(8); }
  int32_t i32() { return static_cast<int32_t>(static_cast<uint32_t>(le(4))); }
  float f32() { return std::bit_cast<float>(static_cast<uint32_t>(le(4))); }
  std::string str() {
    uint32_t n = u32();
    return std::string(take(n));
  }
  std::string_view take(size_t n) {
    if (pos_ + n > data_.size()) throw FormatError("knowledge base file truncated");
    std::string_view v(data_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  size_t pos() const { return pos_; }

 private:
  uint64_t le(int n) {
    auto v = take(static_cast<size_t>(n));
    uint64_t out = 0;
    for (int i = 0; i < n; ++i)
      out |= static_cast<uint64_t>(static_cast<uint8_t>(v[static_cast<size_t>(i)])) << (8 * i);
    return out;
  }
  const std::string& data_;
  size_t pos_ = 0;
};

void write_fragment(Writer& w, const ActivitySeq& frag) {
  w.u32(static_cast<uint32_t>(frag.size()));
  for (const auto& a : frag) w.str(a.label());
}

ActivitySeq read_fragment(Reader& r) {
  uint32_t n = r.u32();
  ActivitySeq frag;
  frag.reserve(n);
  for (uint32_t i = 0; i < n; ++i) frag.push_back(Activity(r.str()));
  return frag;
}

}  // namespace

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  Writer body;
  body.u32(kVersion);
  body.u32(static_cast<uint32_t>(kb.dim()));
  body.str(kb.embedder_name());
  body.u64(kb.entries().size());
  for (const auto& e : kb.entries()) {
    body.str(e.trace.id);
    body.u32(static_cast<uint32_t>(e.trace.activities.size()));
    for (const auto& a : e.trace.activities) body.str(a.label());
    for (double v : e.embedding.values) body.f32(static_cast<float>(v));
    body.u16(static_cast<uint16_t>(e.deviations.size()));
    for (const auto& d : e.deviations) {
      body.u8(static_cast<uint8_t>(d.kind));
      write_fragment(body, d.fragment_a);
      write_fragment(body, d.fragment_b);
      body.u8(d.position.has_value() ? 1 : 0);
      if (d.position) body.i32(*d.position);
    }
    body.str(e.source_model);
  }
  std::string payload(kMagic, sizeof(kMagic));
  payload += body.bytes();
  uint64_t checksum = fnv1a64(payload);
  Writer tail;
  tail.u64(checksum);
  payload += tail.bytes();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < sizeof(kMagic) + 8) throw FormatError("knowledge base file truncated");
  if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a knowledge base file");
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<uint64_t>(
                  static_cast<uint8_t>(data[data.size() - 8 + static_cast<size_t>(i)]))
              << (8 * i);
  uint64_t actual = fnv1a64(std::string_view(data.data(), data.size() - 8));
  if (stored != actual) throw ChecksumError("knowledge base checksum mismatch");

  std::string body(data.data() + sizeof(kMagic), data.size() - sizeof(kMagic) - 8);
  Reader br(body);
  uint32_t version = br.u32();
  if (version != kVersion)
    throw VersionError("unsupported knowledge base version " + std::to_string(version));
  uint32_t dim = br.u32();
  std::string embedder_name = br.str();
  uint64_t count = br.u64();
  std::vector<KbEntry> entries;
  entries.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    std::string trace_id = br.str();
    uint32_t acts = br.u32();
    ActivitySeq seq;
    seq.reserve(acts);
    for (uint32_t j = 0; j < acts; ++j) seq.push_back(Activity(br.str()));
    Embedding emb;
    emb.values.reserve(dim);
    for (uint32_t j = 0; j < dim; ++j) emb.values.push_back(static_cast<double>(br.f32()));
    uint16_t devs = br.u16();
    std::vector<DeviationPattern> ds;
    ds.reserve(devs);
    for (uint16_t j = 0; j < devs; ++j) {
      uint8_t tag = br.u8();
      if (tag >= kDeviationKindCount) throw FormatError("unknown deviation tag");
      DeviationPattern d{static_cast<DeviationKind>(tag), read_fragment(br),
                         read_fragment(br), std::nullopt};
      if (br.u8() != 0) d.position = br.i32();
      ds.push_back(std::move(d));
    }
    std::string source_model = br.str();
    entries.push_back(
        KbEntry{Trace(std::move(trace_id), std::move(seq)), std::move(emb), std::move(ds),
                std::move(source_model)});
  }
  if (br.pos() != body.size()) throw FormatError("trailing bytes after last entry");
  return KnowledgeBase(std::move(embedder_name), dim, std::move(entries));
}

}  // namespace tracesift
