#include "evorag/llm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag::llm {

void check_request(const ChatRequest& request) {
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
    throw PreconditionViolation("temperature " + std::to_string(request.temperature) + " outside [0, 2]");
  if (request.system_text.empty() || request.user_text.empty())
    throw PreconditionViolation("chat request '" + request.tag + "' has empty system or user text");
  if (request.max_tokens <= 0) throw PreconditionViolation("max_tokens must be positive");
}

std::int64_t estimate_tokens(std::string_view s) {
  const auto n = static_cast<std::int64_t>(text::whitespace_token_count(s));
  return (n * 4 + 2) / 3;
}

void to_json(Json& j, const CallRecord& r) {
  j = Json{{"tag", r.tag}, {"trace", r.trace}, {"tokens_in", r.tokens_in}, {"tokens_out", r.tokens_out}, {"ok", r.ok}};
}

CallLog::CallLog(std::filesystem::path path) : path_(std::move(path)) {}

void CallLog::write_locked(const CallRecord& rec) {
  records_.push_back(rec);
  if (path_) {
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    out << Json(rec).dump() << '\n';
  }
}

void CallLog::record(CallRecord rec) {
  std::lock_guard lock(mu_);
  write_locked(rec);
}

void CallLog::append_all(const std::vector<CallRecord>& recs) {
  std::lock_guard lock(mu_);
  for (const auto& r : recs) write_locked(r);
}

std::vector<CallRecord> CallLog::snapshot() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::int64_t CallLog::total_tokens() const { return total_tokens_with_prefix(""); }

std::int64_t CallLog::total_tokens_with_prefix(std::string_view prefix) const {
  std::lock_guard lock(mu_);
  std::int64_t sum = 0;
  for (const auto& r : records_)
    if (std::string_view(r.tag).starts_with(prefix)) sum += r.tokens_in + r.tokens_out;
  return sum;
}

ChatResponse Channel::complete(const ChatRequest& request) const {
  try {
    ChatResponse resp = backend_->complete(request);
    if (sink_) sink_->record({request.tag, request.trace, resp.tokens_in, resp.tokens_out, true});
    return resp;
  } catch (const BackendUnavailable&) {
    if (sink_) sink_->record({request.tag, request.trace, 0, 0, false});
    throw;
  }
}

// ---------------------------------------------------------------------------

ScriptEntry parse_script_entry(const Json& j) {
  ScriptEntry e;
  e.tag = j.value("tag", "*");
  const std::string match = j.value("match", "substring");
  if (match == "exact") {
    e.match = MatchKind::kExact;
  } else if (match == "substring") {
    e.match = MatchKind::kSubstring;
  } else {
    throw ConfigError("script entry has unknown match kind '" + match + "'");
  }
  e.user_contains = j.value("user_contains", "");
  e.system_contains = j.value("system_contains", "");
  if (j.contains("response")) e.responses.push_back({j.at("response").get<std::string>(), 1.0});
  if (j.contains("responses")) {
    for (const auto& r : j.at("responses")) {
      if (r.is_string()) {
        e.responses.push_back({r.get<std::string>(), 1.0});
      } else {
        e.responses.push_back({r.at("text").get<std::string>(), r.value("weight", 1.0)});
      }
    }
  }
  if (e.responses.empty()) throw ConfigError("script entry for tag '" + e.tag + "' has no response");
  for (const auto& r : e.responses)
    if (!(r.weight > 0.0)) throw ConfigError("script entry for tag '" + e.tag + "' has a non-positive weight");
  if (j.contains("tokens_in")) e.tokens_in = j.at("tokens_in").get<std::int64_t>();
  if (j.contains("tokens_out")) e.tokens_out = j.at("tokens_out").get<std::int64_t>();
  return e;
}

std::vector<ScriptEntry> parse_script(std::string_view jsonl, const std::string& origin) {
  std::vector<ScriptEntry> entries;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    ++line_no;
    const std::string line = text::trim(jsonl.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.starts_with("//")) continue;
    try {
      entries.push_back(parse_script_entry(Json::parse(line)));
    } catch (const Json::exception& ex) {
      throw IngestError(origin, line_no, ex.what());
    } catch (const ConfigError& ex) {
      throw IngestError(origin, line_no, ex.what());
    }
  }
  return entries;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open script table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_script(ss.str(), path.string());
}

ScriptedBackend ScriptedBackend::from_jsonl(std::string_view jsonl, const std::string& origin) {
  return ScriptedBackend(parse_script(jsonl, origin));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) { return ScriptedBackend(load_script(path)); }

std::int64_t ScriptedBackend::call_count(std::string_view tag_prefix) const {
  std::lock_guard lock(count_mu_);
  std::int64_t n = 0;
  for (const auto& [tag, c] : calls_by_tag_)
    if (std::string_view(tag).starts_with(tag_prefix)) n += c;
  return n;
}

namespace {

bool tag_matches(const std::string& pattern, const std::string& tag) {
  if (pattern == "*") return true;
  if (!pattern.empty() && pattern.back() == '*')
    return std::string_view(tag).starts_with(std::string_view(pattern).substr(0, pattern.size() - 1));
  return pattern == tag;
}

std::string quoted_block(const std::string& user) {
  const auto open = user.find("<<<\n");
  if (open == std::string::npos) return {};
  const auto body = open + 4;
  const auto close = user.find("\n>>>", body);
  if (close == std::string::npos) return {};
  return user.substr(body, close - body);
}

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

ChatResponse ScriptedBackend::do_complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  {
    std::lock_guard lock(count_mu_);
    ++calls_by_tag_[request.tag];
  }
  for (const auto& e : entries_) {
    if (!tag_matches(e.tag, request.tag)) continue;
    if (!e.system_contains.empty() && request.system_text.find(e.system_contains) == std::string::npos) continue;
    const bool user_ok = e.match == MatchKind::kExact ? request.user_text == e.user_contains
                                                      : request.user_text.find(e.user_contains) != std::string::npos;
    if (!user_ok) continue;

    std::size_t pick = 0;
    if (e.responses.size() > 1 && request.temperature > 0.0) {
      double total = 0.0;
      for (const auto& r : e.responses) total += r.weight;
      std::uint64_t h = text::fnv1a64(request.tag);
      h = text::fnv1a64(request.system_text, h);
      h = text::fnv1a64(request.user_text, h);
      h = text::fnv1a64(std::to_string(request.seed), h);
      // 53 high-quality bits mapped to [0, total).
      const double u = static_cast<double>(h >> 11) / 9007199254740992.0 * total;
      double acc = 0.0;
      pick = e.responses.size() - 1;
      for (std::size_t i = 0; i < e.responses.size(); ++i) {
        acc += e.responses[i].weight;
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    ChatResponse resp;
    resp.text = e.responses[pick].text;
    if (resp.text.find("{{block}}") != std::string::npos)
      resp.text = replace_all(resp.text, "{{block}}", quoted_block(request.user_text));
    resp.tokens_in = e.tokens_in.value_or(estimate_tokens(request.system_text) + estimate_tokens(request.user_text));
    resp.tokens_out = e.tokens_out.value_or(estimate_tokens(resp.text));
    return resp;
  }
  throw ScriptMiss("no script entry for tag '" + request.tag + "' and user text '" +
                   text::truncate_utf8(request.user_text, 160) + "'");
}

// ---------------------------------------------------------------------------

std::optional<Schema> parse_schema_name(std::string_view name) {
  if (name == "plan") return Schema::kPlan;
  if (name == "insight_group") return Schema::kInsightGroup;
  if (name == "library_ops") return Schema::kLibraryOps;
  if (name == "rope_analysis") return Schema::kRopeAnalysis;
  return std::nullopt;
}

std::string_view to_string(Schema s) {
  switch (s) {
    case Schema::kPlan: return "plan";
    case Schema::kInsightGroup: return "insight_group";
    case Schema::kLibraryOps: return "library_ops";
    case Schema::kRopeAnalysis: return "rope_analysis";
  }
  return "unknown";
}

namespace {

using Violation = std::optional<std::string>;

Violation need_string(const Json& obj, const char* key, bool nonempty = false) {
  if (!obj.contains(key)) return std::string("missing \"") + key + "\"";
  if (!obj.at(key).is_string()) return std::string("\"") + key + "\" must be a string";
  if (nonempty && text::trim(obj.at(key).get<std::string>()).empty())
    return std::string("\"") + key + "\" must be nonempty";
  return std::nullopt;
}

Violation need_string_array(const Json& obj, const char* key) {
  if (!obj.contains(key)) return std::string("missing \"") + key + "\"";
  const auto& a = obj.at(key);
  if (!a.is_array()) return std::string("\"") + key + "\" must be an array";
  for (const auto& v : a)
    if (!v.is_string()) return std::string("\"") + key + "\" must contain only strings";
  return std::nullopt;
}

Violation check_plan(const Json& v) {
  if (auto e = need_string(v, "query_profile")) return e;
  if (auto e = need_string_array(v, "selected_agents")) return e;
  if (!v.contains("execution_order")) return "missing \"execution_order\"";
  const auto& order = v.at("execution_order");
  if (!order.is_array() || order.empty()) return "\"execution_order\" must be a nonempty array";
  for (const auto& s : order) {
    if (!s.is_object()) return "execution_order entries must be objects";
    if (!s.contains("step") || !s.at("step").is_number_integer()) return "execution_order entry needs integer \"step\"";
    if (auto e = need_string(s, "agent", true)) return "execution_order entry: " + *e;
    if (!s.contains("depends_on") || !s.at("depends_on").is_array())
      return "execution_order entry needs array \"depends_on\"";
    for (const auto& d : s.at("depends_on"))
      if (!d.is_number_integer()) return "\"depends_on\" must contain integers";
    if (auto e = need_string(s, "mode")) return "execution_order entry: " + *e;
    if (!parse_step_mode(s.at("mode").get<std::string>())) return "\"mode\" must be sequential or parallel";
  }
  return std::nullopt;
}

Violation check_insight_group(const Json& v) {
  if (auto e = need_string_array(v, "success_factors")) return e;
  if (auto e = need_string_array(v, "failure_modes")) return e;
  if (!v.contains("insights") || !v.at("insights").is_array()) return "missing array \"insights\"";
  for (const auto& i : v.at("insights")) {
    if (!i.is_object()) return "insights entries must be objects";
    if (auto e = need_string(i, "query_type")) return "insight: " + *e;
    if (auto e = need_string(i, "insight", true)) return "insight: " + *e;
  }
  if (v.contains("blamed_agents"))
    if (auto e = need_string_array(v, "blamed_agents")) return e;
  return std::nullopt;
}

Violation check_library_ops(const Json& v) {
  if (!v.contains("operations") || !v.at("operations").is_array()) return "missing array \"operations\"";
  for (const auto& op : v.at("operations")) {
    if (!op.is_object()) return "operations entries must be objects";
    if (auto e = need_string(op, "operation")) return e;
    const std::string kind = op.at("operation").get<std::string>();
    if (kind != "ADD" && kind != "MERGE" && kind != "PRUNE" && kind != "KEEP")
      return "\"operation\" must be ADD, MERGE, PRUNE or KEEP";
    if (auto e = need_string(op, "new_insight")) return e;
    if (op.contains("target_entry_ids") && !op.at("target_entry_ids").is_null())
      if (auto e = need_string_array(op, "target_entry_ids")) return e;
    if (op.contains("merged_insight") && !op.at("merged_insight").is_null() && !op.at("merged_insight").is_string())
      return "\"merged_insight\" must be a string or null";
    if (kind == "MERGE") {
      if (!op.contains("merged_insight") || !op.at("merged_insight").is_string() ||
          text::trim(op.at("merged_insight").get<std::string>()).empty())
        return "MERGE requires a nonempty \"merged_insight\"";
    }
  }
  return std::nullopt;
}

Violation check_rope_analysis(const Json& v) {
  if (!v.contains("operational_rules") || !v.at("operational_rules").is_array())
    return "missing array \"operational_rules\"";
  for (const auto& r : v.at("operational_rules")) {
    if (!r.is_object()) return "operational_rules entries must be objects";
    if (auto e = need_string(r, "rule", true)) return e;
    if (auto e = need_string(r, "derived_from")) return e;
  }
  if (!v.contains("behavioral_principles") || !v.at("behavioral_principles").is_array())
    return "missing array \"behavioral_principles\"";
  for (const auto& p : v.at("behavioral_principles")) {
    if (!p.is_object()) return "behavioral_principles entries must be objects";
    if (auto e = need_string(p, "principle", true)) return e;
    if (auto e = need_string(p, "derived_from")) return e;
  }
  if (v.contains("updated_prompt") && !v.at("updated_prompt").is_string()) return "\"updated_prompt\" must be a string";
  return std::nullopt;
}

}  // namespace

std::optional<std::string> check_schema(Schema schema, const Json& value) {
  if (!value.is_object()) return "response is not a JSON object";
  switch (schema) {
    case Schema::kPlan: return check_plan(value);
    case Schema::kInsightGroup: return check_insight_group(value);
    case Schema::kLibraryOps: return check_library_ops(value);
    case Schema::kRopeAnalysis: return check_rope_analysis(value);
  }
  return "unknown schema";
}

std::string strip_to_json(std::string_view response) {
  std::string_view body = response;
  const auto fence = body.find("```");
  if (fence != std::string_view::npos) {
    const auto line_end = body.find('\n', fence);
    if (line_end != std::string_view::npos) {
      const auto close = body.find("```", line_end + 1);
      body = body.substr(line_end + 1, close == std::string_view::npos ? std::string_view::npos : close - line_end - 1);
    }
  }
  const auto open = body.find('{');
  const auto close = body.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open)
    body = body.substr(open, close - open + 1);
  return text::trim(body);
}

Json complete_json(const Channel& channel, const ChatRequest& request, Schema schema, const ExtraCheck& extra) {
  ChatRequest attempt = request;
  std::string last_violation;
  for (int round = 0; round < 2; ++round) {
    const ChatResponse resp = channel.complete(attempt);
    std::optional<std::string> violation;
    Json value;
    try {
      value = Json::parse(strip_to_json(resp.text));
      violation = check_schema(schema, value);
      if (!violation && extra) violation = extra(value);
    } catch (const Json::parse_error& ex) {
      violation = std::string("response is not valid JSON (") + ex.what() + ")";
    } catch (const Json::exception& ex) {
      violation = std::string("response has the wrong shape (") + ex.what() + ")";
    }
    if (!violation) return value;
    last_violation = *violation;
    spdlog::debug("{}: invalid {} response: {}", request.tag, to_string(schema), last_violation);
    attempt.user_text = request.user_text + "\n\nYour previous response could not be used: " + last_violation +
                        "\nRespond again with only the JSON object in the required format.";
  }
  throw MalformedStructuredOutput(std::string(to_string(schema)) + " output from '" + request.tag +
                                  "' invalid twice: " + last_violation);
}

}  // namespace evorag::llm
