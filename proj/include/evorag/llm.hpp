#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evorag/model.hpp"

namespace evorag::llm {

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string tag;
  // Sampling seed forwarded to the provider; the scripted backend uses it to
  // pick among weighted alternatives.
  std::uint64_t seed = 0;
  // Free-form attribution (e.g. trajectory id); logged, never used for matching.
  std::string trace;
};

struct ChatResponse {
  std::string text;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::int64_t latency_ms = 0;
};

// Throws PreconditionViolation on temperature outside [0, 2], empty texts or
// non-positive max_tokens.
void check_request(const ChatRequest& request);

// Whitespace-token count scaled by 4/3, rounded up.
std::int64_t estimate_tokens(std::string_view s);

class Backend {
 public:
  virtual ~Backend() = default;

  ChatResponse complete(const ChatRequest& request) {
    check_request(request);
    return do_complete(request);
  }

 protected:
  virtual ChatResponse do_complete(const ChatRequest& request) = 0;
};

struct CallRecord {
  std::string tag;
  std::string trace;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  bool ok = true;
};

void to_json(Json& j, const CallRecord& r);

class CallSink {
 public:
  virtual ~CallSink() = default;
  virtual void record(CallRecord rec) = 0;
};

// Unsynchronised buffer owned by a single step or task; drained into a
// CallLog in a canonical order.
class CallBuffer : public CallSink {
 public:
  void record(CallRecord rec) override { records_.push_back(std::move(rec)); }
  const std::vector<CallRecord>& records() const { return records_; }
  std::vector<CallRecord> take() { return std::exchange(records_, {}); }

 private:
  std::vector<CallRecord> records_;
};

// Serialised single-writer log of every completion, optionally mirrored to a
// JSONL file.
class CallLog : public CallSink {
 public:
  CallLog() = default;
  explicit CallLog(std::filesystem::path path);

  void record(CallRecord rec) override;
  void append_all(const std::vector<CallRecord>& recs);

  std::vector<CallRecord> snapshot() const;
  std::int64_t total_tokens() const;
  std::int64_t total_tokens_with_prefix(std::string_view prefix) const;

 private:
  void write_locked(const CallRecord& rec);

  mutable std::mutex mu_;
  std::vector<CallRecord> records_;
  std::optional<std::filesystem::path> path_;
};

// A backend plus the sink its calls are accounted to.
class Channel {
 public:
  Channel(Backend& backend, CallSink* sink) : backend_(&backend), sink_(sink) {}

  Backend& backend() const { return *backend_; }
  CallSink* sink() const { return sink_; }
  Channel with_sink(CallSink* sink) const { return Channel(*backend_, sink); }

  ChatResponse complete(const ChatRequest& request) const;

 private:
  Backend* backend_;
  CallSink* sink_;
};

// ---------------------------------------------------------------------------
// Scripted backend

enum class MatchKind { kExact, kSubstring };

struct ScriptResponse {
  std::string text;
  double weight = 1.0;
};

struct ScriptEntry {
  // Exact tag, a prefix ending in '*', or "*" for any tag.
  std::string tag;
  MatchKind match = MatchKind::kSubstring;
  std::string user_contains;
  std::string system_contains;
  std::vector<ScriptResponse> responses;
  std::optional<std::int64_t> tokens_in;
  std::optional<std::int64_t> tokens_out;
};

ScriptEntry parse_script_entry(const Json& j);
// JSONL script table; blank lines and lines starting with "//" are skipped.
std::vector<ScriptEntry> parse_script(std::string_view jsonl, const std::string& origin = "<memory>");
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

// Deterministic table-driven stand-in for a language model. The first
// matching entry wins. Responses may contain "{{block}}", replaced by the text
// quoted between "<<<" and ">>>" lines in the user message.
class ScriptedBackend : public Backend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<ScriptEntry> entries) : entries_(std::move(entries)) {}

  static ScriptedBackend from_file(const std::filesystem::path& path);
  static ScriptedBackend from_jsonl(std::string_view jsonl, const std::string& origin = "<memory>");

  void add(ScriptEntry entry) { entries_.push_back(std::move(entry)); }
  void prepend(ScriptEntry entry) { entries_.insert(entries_.begin(), std::move(entry)); }

  std::int64_t call_count() const { return calls_.load(); }
  std::int64_t call_count(std::string_view tag_prefix) const;

 protected:
  ChatResponse do_complete(const ChatRequest& request) override;

 private:
  std::vector<ScriptEntry> entries_;
  std::atomic<std::int64_t> calls_{0};
  mutable std::mutex count_mu_;
  std::map<std::string, std::int64_t> calls_by_tag_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backend

struct HttpConfig {
  // Base URL, e.g. "https://api.openai.com/v1"; requests go to <base>/chat/completions.
  std::string endpoint;
  std::string model;
  std::string api_key;
  int retries = 2;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds timeout{60000};
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);

  // Request body sent to the provider; exposed for tests.
  Json request_body(const ChatRequest& request) const;
  // Decodes a provider response, falling back to estimates when usage is absent.
  static ChatResponse parse_response_body(const Json& body, const ChatRequest& request);

 protected:
  ChatResponse do_complete(const ChatRequest& request) override;

 private:
  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// ---------------------------------------------------------------------------
// Structured output

enum class Schema { kPlan, kInsightGroup, kLibraryOps, kRopeAnalysis };

std::optional<Schema> parse_schema_name(std::string_view name);
std::string_view to_string(Schema s);

// Returns a description of the first violation, or nullopt when valid.
std::optional<std::string> check_schema(Schema schema, const Json& value);

// Removes markdown code fences and surrounding prose, returning the JSON body.
std::string strip_to_json(std::string_view response);

using ExtraCheck = std::function<std::optional<std::string>(const Json&)>;

// Completes, decodes and validates; on failure reissues once with a repair
// note. Throws MalformedStructuredOutput after two invalid responses.
Json complete_json(const Channel& channel, const ChatRequest& request, Schema schema,
                   const ExtraCheck& extra = nullptr);

}  // namespace evorag::llm
