#include "evorag/agents.hpp"

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag::agents {

std::string build_user_message(const AgentInput& input) {
  std::string msg = "Question: " + input.query_text;
  for (const auto& [step, output] : input.upstream_outputs) {
    msg += "\n\nContext from step " + std::to_string(step) + ":\n" + output;
  }
  return msg;
}

std::optional<std::string> parse_search_directive(std::string_view output) {
  std::size_t start = 0;
  while (start <= output.size()) {
    auto end = output.find('\n', start);
    if (end == std::string_view::npos) end = output.size();
    const std::string line = text::trim(output.substr(start, end - start));
    if (text::starts_with_ci(line, "Search:")) {
      std::string q = text::trim(std::string_view(line).substr(7));
      if (!q.empty()) return q;
    }
    start = end + 1;
  }
  return std::nullopt;
}

namespace {

void accumulate(AgentOutput& out, const llm::ChatResponse& resp) {
  out.tokens_in += resp.tokens_in;
  out.tokens_out += resp.tokens_out;
  out.wall_ms += resp.latency_ms;
}

std::string format_passages(const std::vector<retrieval::SearchHit>& hits) {
  if (hits.empty()) return "(no passages found)";
  std::string out;
  for (const auto& h : hits) {
    if (!out.empty()) out += "\n";
    out += "[" + h.passage->id + "] " + h.passage->title + ": " + h.passage->text;
  }
  return out;
}

}  // namespace

AgentOutput run_agent(const AgentRole& role, const std::string& system_prompt, const AgentInput& input,
                      const llm::Channel& channel, const CallContext& ctx, const AgentRuntime& runtime) {
  AgentOutput out;
  const std::string base = build_user_message(input);
  llm::ChatRequest req;
  req.system_text = system_prompt;
  req.temperature = ctx.temperature;
  req.max_tokens = runtime.max_tokens;
  req.seed = ctx.seed;
  req.trace = ctx.trace;

  const bool searches = role.name == roles::kRetriever;
  if (!searches) {
    req.tag = "agent." + role.name;
    req.user_text = base;
    const auto resp = channel.complete(req);
    accumulate(out, resp);
    out.output_text = resp.text;
    return out;
  }

  if (runtime.index == nullptr) throw PreconditionViolation("Retriever requires a configured index");
  req.tag = "agent.Retriever.search";
  req.user_text = base + "\n\nWrite the search query now.";
  const auto phase1 = channel.complete(req);
  accumulate(out, phase1);

  std::string search_string;
  if (auto directive = parse_search_directive(phase1.text)) {
    search_string = *directive;
  } else {
    search_string = input.query_text;
    spdlog::warn("{}: Retriever gave no search directive, searching with the question text", ctx.trace);
  }
  const auto hits = runtime.index->search(search_string, runtime.top_k_per_step);
  std::vector<std::string> ids;
  for (const auto& h : hits) ids.push_back(h.passage->id);
  out.tool_calls.push_back(
      {std::string(kSearchTool),
       Json{{"query", search_string}, {"k", runtime.top_k_per_step}}.dump(),
       text::join(ids, ",")});

  req.tag = "agent.Retriever.summarize";
  req.user_text = base + "\n\nSearch query: " + search_string + "\n\nRetrieved passages:\n" + format_passages(hits) +
                  "\n\nSummarize the evidence now.";
  const auto phase2 = channel.complete(req);
  accumulate(out, phase2);
  out.output_text = phase2.text;
  return out;
}

}  // namespace evorag::agents
