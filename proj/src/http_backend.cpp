#include "tracesift/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "tracesift/errors.hpp"

namespace tracesift {

namespace {

using json = nlohmann::ordered_json;

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // always starts with '/'
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || scheme_end == 0) {
    throw ContractError("endpoint must be an absolute http(s) URL: \"" + url + "\"");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == scheme_end + 3) {
    throw ContractError("endpoint has no host: \"" + url + "\"");
  }
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

void validate_options(const RemoteOptions& opts) {
  split_url(opts.endpoint);
  if (opts.model.empty()) throw ContractError("remote endpoint requires a model name");
  if (opts.max_attempts < 1) throw ContractError("max_attempts must be at least 1");
  if (opts.backoff_initial_ms < 0) throw ContractError("backoff_initial_ms must be non-negative");
  if (opts.backoff_growth < 1.0) throw ContractError("backoff_growth must be at least 1");
  if (opts.timeout_seconds < 1) throw ContractError("timeout_seconds must be at least 1");
}

std::string read_env(const std::string& var) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

// Integral-seconds Retry-After only; anything else keeps the computed wait.
int retry_wait_ms(const httplib::Response& res, int fallback_ms) {
  if (!res.has_header("Retry-After")) return fallback_ms;
  const std::string v = res.get_header_value("Retry-After");
  if (v.empty()) return fallback_ms;
  char* end = nullptr;
  const long sec = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || sec < 0) return fallback_ms;
  return static_cast<int>(std::min(sec, 60L)) * 1000;
}

// POSTs the body to the configured endpoint, retrying rate-limited attempts,
// and returns the response body of the eventual HTTP 200.
std::string post_with_backoff(const RemoteOptions& opts, const std::string& api_key,
                              const std::string& body, std::mutex* hook_mutex) {
  const SplitUrl url = split_url(opts.endpoint);
  int wait_ms = opts.backoff_initial_ms;
  for (int attempt = 1;; ++attempt) {
    httplib::Client client(url.base);
    client.set_connection_timeout(opts.timeout_seconds, 0);
    client.set_read_timeout(opts.timeout_seconds, 0);
    client.set_write_timeout(opts.timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(url.path, headers, body, "application/json");

    if (opts.on_exchange) {
      HttpExchange ex;
      ex.url = opts.endpoint;
      ex.request_body = body;
      ex.attempt = attempt;
      if (res) {
        ex.status = res->status;
        ex.response_body = res->body;
      }
      if (hook_mutex != nullptr) {
        std::lock_guard<std::mutex> lock(*hook_mutex);
        opts.on_exchange(ex);
      } else {
        opts.on_exchange(ex);
      }
    }

    if (!res) {
      throw BackendError("POST " + opts.endpoint + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status == 200) return res->body;
    if (res->status != 429 || attempt >= opts.max_attempts) {
      std::string msg = "POST " + opts.endpoint + " returned HTTP " + std::to_string(res->status);
      if (res->status == 429) {
        msg += " after " + std::to_string(attempt) + " attempts";
      }
      throw BackendError(msg);
    }
    const int sleep_ms = retry_wait_ms(*res, wait_ms);
    if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
    wait_ms = std::max(1, static_cast<int>(std::lround(wait_ms * opts.backoff_growth)));
  }
}

json parse_response(const std::string& body, const std::string& endpoint) {
  json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    throw BackendError("response from " + endpoint + " is not a JSON object");
  }
  return parsed;
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteOptions opts)
    : opts_(std::move(opts)),
      api_key_(read_env(opts_.api_key_env)),
      name_("remote:" + opts_.model) {
  validate_options(opts_);
}

std::string RemoteBackend::complete(const GenerationRequest& req) {
  json body;
  body["model"] = opts_.model;
  body["prompt"] = req.prompt;
  body["temperature"] = req.config.temperature;
  body["seed"] = req.config.seed;
  body["max_tokens"] = req.config.max_tokens;
  const std::string response = post_with_backoff(opts_, api_key_, body.dump(), &hook_mutex_);
  const json parsed = parse_response(response, opts_.endpoint);
  if (!parsed.contains("text") || !parsed["text"].is_string()) {
    throw BackendError("response from " + opts_.endpoint + " lacks a string \"text\" field");
  }
  return parsed["text"].get<std::string>();
}

RemoteEmbedder::RemoteEmbedder(RemoteOptions opts, size_t dim)
    : opts_(std::move(opts)),
      api_key_(read_env(opts_.api_key_env)),
      dim_(dim),
      name_("remote:" + opts_.model) {
  validate_options(opts_);
  if (dim_ == 0) throw ContractError("embedding dimension must be positive");
}

Embedding RemoteEmbedder::embed(const std::string& sentence) const {
  std::lock_guard<std::mutex> lock(serial_);
  json body;
  body["model"] = opts_.model;
  body["text"] = sentence;
  const std::string response = post_with_backoff(opts_, api_key_, body.dump(), nullptr);
  const json parsed = parse_response(response, opts_.endpoint);
  if (!parsed.contains("embedding") || !parsed["embedding"].is_array()) {
    throw BackendError("response from " + opts_.endpoint + " lacks an \"embedding\" array");
  }
  const json& values = parsed["embedding"];
  if (values.size() != dim_) {
    throw BackendError("embedding from " + opts_.endpoint + " has dimension " +
                       std::to_string(values.size()) + ", expected " + std::to_string(dim_));
  }
  Embedding out;
  out.values.reserve(dim_);
  for (const json& v : values) {
    if (!v.is_number()) {
      throw BackendError("embedding from " + opts_.endpoint + " holds a non-numeric value");
    }
    out.values.push_back(v.get<double>());
  }
  return out;
}

}  // namespace tracesift
