#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <thread>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/llm.hpp"

namespace evorag::llm {

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (config_.model.empty()) throw ConfigError("HTTP backend needs a model name");
}

Json HttpBackend::request_body(const ChatRequest& request) const {
  Json body{{"model", config_.model},
            {"messages", Json::array({Json{{"role", "system"}, {"content", request.system_text}},
                                      Json{{"role", "user"}, {"content", request.user_text}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (request.seed != 0) body["seed"] = request.seed;
  return body;
}

ChatResponse HttpBackend::parse_response_body(const Json& body, const ChatRequest& request) {
  ChatResponse resp;
  const auto& choices = body.at("choices");
  if (!choices.is_array() || choices.empty()) throw BackendUnavailable("provider returned no choices");
  const auto& content = choices.at(0).at("message").at("content");
  resp.text = content.is_string() ? content.get<std::string>() : std::string();
  const auto usage = body.find("usage");
  if (usage != body.end() && usage->is_object() && usage->contains("prompt_tokens") &&
      usage->contains("completion_tokens")) {
    resp.tokens_in = usage->at("prompt_tokens").get<std::int64_t>();
    resp.tokens_out = usage->at("completion_tokens").get<std::int64_t>();
  } else {
    resp.tokens_in = estimate_tokens(request.system_text) + estimate_tokens(request.user_text);
    resp.tokens_out = estimate_tokens(resp.text);
  }
  return resp;
}

ChatResponse HttpBackend::do_complete(const ChatRequest& request) {
  const std::string payload = request_body(request).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(scheme_host_port_);
    const auto ms = config_.timeout.count();
    client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
    client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
    client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);
    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      spdlog::warn("{} attempt {} failed: {}", request.tag, attempt + 1, last_error);
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      spdlog::warn("{} attempt {} failed: {}", request.tag, attempt + 1, last_error);
      continue;
    }
    if (res->status != 200) throw BackendUnavailable("HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      ChatResponse resp = parse_response_body(Json::parse(res->body), request);
      resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
      return resp;
    } catch (const Json::exception& ex) {
      throw BackendUnavailable(std::string("unparseable provider response: ") + ex.what());
    }
  }
  throw BackendUnavailable(request.tag + ": " + last_error + " after " + std::to_string(config_.retries + 1) + " attempts");
}

}  // namespace evorag::llm
