#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <string>

#include "tracesift/detect.hpp"
#include "tracesift/embed.hpp"

namespace tracesift {

// One HTTP round trip as seen by the audit hook. status 0 means the request
// never produced a response (connection refused, timeout, ...).
struct HttpExchange {
  std::string url;
  std::string request_body;
  int status = 0;
  std::string response_body;
  int attempt = 1;  // 1-based attempt number within one logical call
};

struct RemoteOptions {
  std::string endpoint;  // absolute URL, e.g. "http://127.0.0.1:8414/complete"
  std::string model;
  std::string api_key_env = "TRACESIFT_API_KEY";
  int max_attempts = 5;  // total tries per call; only HTTP 429 is retried
  int backoff_initial_ms = 200;
  double backoff_growth = 2.0;
  int timeout_seconds = 120;
  // Audit hook, called once per round trip (rate-limited attempts included).
  // Invocations are serialized; the hook may write files without locking.
  std::function<void(const HttpExchange&)> on_exchange;
};

// Text-generation backend speaking the JSON convention
//   POST {"model","prompt","temperature","seed","max_tokens"} -> {"text"}.
// When the configured environment variable is set, its value travels as an
// Authorization bearer header. HTTP 429 is retried with exponential backoff
// (an integral Retry-After header overrides the wait); every other failure
// throws BackendError. Safe for concurrent complete() calls.
class RemoteBackend final : public GenerationBackend {
 public:
  explicit RemoteBackend(RemoteOptions opts);

  const std::string& name() const override { return name_; }
  bool supports_concurrency() const override { return true; }
  std::string complete(const GenerationRequest& req) override;

  const RemoteOptions& options() const { return opts_; }

 private:
  RemoteOptions opts_;
  std::string api_key_;
  std::string name_;
  std::mutex hook_mutex_;
};

// Sentence embedder speaking POST {"model","text"} -> {"embedding":[...]}
// over the same transport conventions. The served vector must have exactly
// the configured dimension. Calls are serialized so rate-limit backoff is
// handled one request at a time.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(RemoteOptions opts, size_t dim);

  const std::string& name() const override { return name_; }
  size_t dim() const override { return dim_; }
  Embedding embed(const std::string& sentence) const override;

  const RemoteOptions& options() const { return opts_; }

 private:
  RemoteOptions opts_;
  std::string api_key_;
  size_t dim_;
  std::string name_;
  mutable std::mutex serial_;
};

}  // namespace tracesift
