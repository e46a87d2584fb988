#include "evorag/rope.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/evaluation.hpp"
#include "evorag/resources.hpp"
#include "evorag/text.hpp"

namespace evorag::rope {

namespace {
constexpr std::size_t kDigestChars = 300;
constexpr std::size_t kResultChars = 500;
}  // namespace

std::string_view to_string(Axis a) {
  switch (a) {
    case Axis::kThoroughness: return "thoroughness";
    case Axis::kRiskSensitivity: return "risk_sensitivity";
    case Axis::kErrorCorrection: return "error_correction";
    case Axis::kHeuristicInjection: return "heuristic_injection";
    case Axis::kEfficiency: return "efficiency";
  }
  return "thoroughness";
}

std::optional<Axis> parse_axis(std::string_view s) {
  const std::string l = text::to_lower(text::trim(s));
  for (Axis a : all_axes())
    if (l == to_string(a)) return a;
  return std::nullopt;
}

std::vector<Axis> all_axes() {
  return {Axis::kThoroughness, Axis::kRiskSensitivity, Axis::kErrorCorrection, Axis::kHeuristicInjection,
          Axis::kEfficiency};
}

std::string_view axis_guidance(Axis a) {
  switch (a) {
    case Axis::kThoroughness:
      return "Be more exhaustive: check every part of the question and every piece of context before answering.";
    case Axis::kRiskSensitivity:
      return "Be more cautious: prefer answers supported by explicit evidence and flag weak or conflicting support.";
    case Axis::kErrorCorrection:
      return "Actively look for mistakes in upstream outputs and correct them instead of passing them on.";
    case Axis::kHeuristicInjection:
      return "Add concrete domain heuristics that would have helped on the failed cases.";
    case Axis::kEfficiency:
      return "Be more concise: keep only what the next step needs and avoid redundant work.";
  }
  return "";
}

void check_rope_config(const RopeConfig& c) {
  if (c.max_rules == 0) throw ConfigError("rope max_rules must be positive");
  if (c.buffer_size == 0) throw ConfigError("rope buffer_size must be positive");
  if (c.axes.empty()) throw ConfigError("rope needs at least one axis");
  if (c.dedup_threshold < 0.0 || c.dedup_threshold > 1.0) throw ConfigError("rope dedup_threshold must be in [0, 1]");
  if (c.variant_temperature < 0.0 || c.variant_temperature > 2.0)
    throw ConfigError("rope variant_temperature must be in [0, 2]");
}

void FailureBuffer::push(FailureEntry entry) {
  entries_.push_front(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_back();
}

Json FailureBuffer::to_json() const {
  Json items = Json::array();
  for (const auto& e : entries_) items.push_back(Json{{"query", e.query}, {"trajectory", e.trajectory}, {"reward", e.reward}});
  return Json{{"role", role_}, {"capacity", capacity_}, {"entries", items}};
}

FailureBuffer FailureBuffer::from_json(const Json& j) {
  FailureBuffer b(j.at("role").get<std::string>(), j.at("capacity").get<std::size_t>());
  for (const auto& e : j.at("entries"))
    b.entries_.push_back({e.at("query").get<Query>(), e.at("trajectory").get<Trajectory>(), e.at("reward").get<Reward>()});
  return b;
}

Json to_json(const PromptDelta& d) {
  Json rules = Json::array(), principles = Json::array();
  for (const auto& r : d.operational_rules) rules.push_back(Json{{"rule", r.text}, {"derived_from", r.derived_from}});
  for (const auto& p : d.behavioral_principles)
    principles.push_back(Json{{"principle", p.text}, {"derived_from", p.derived_from}});
  return Json{{"operational_rules", rules}, {"behavioral_principles", principles}};
}

PromptDelta delta_from_json(const Json& j) {
  PromptDelta d;
  auto read = [](const Json& arr, const char* key, std::vector<DeltaItem>& out) {
    for (const auto& item : arr) {
      DeltaItem di{text::collapse_whitespace(item.at(key).get<std::string>()), item.value("derived_from", "")};
      if (!di.text.empty()) out.push_back(std::move(di));
    }
  };
  read(j.at("operational_rules"), "rule", d.operational_rules);
  read(j.at("behavioral_principles"), "principle", d.behavioral_principles);
  return d;
}

std::string format_failures(const FailureBuffer& buffer, std::size_t limit) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  std::size_t shown = 0;
  for (const auto& e : buffer.entries()) {
    if (shown == limit) break;
    if (shown++) os << "\n";
    os << "- Question: " << e.query.text << "\n";
    for (const auto& r : e.trajectory.records)
      if (r.agent == buffer.role())
        os << "  Step " << r.step_index << " output: "
           << text::collapse_whitespace(text::truncate_utf8(r.output_text, kDigestChars)) << "\n";
    os << "  Final answer: " << (e.trajectory.final_answer.empty() ? "(none)" : e.trajectory.final_answer) << "\n";
    os << "  F1: " << e.reward.f1;
  }
  return shown ? os.str() : "(none)";
}

std::vector<PromptVariant> generate_variants(const std::string& role, const PromptState& state,
                                             const FailureBuffer& buffer, const llm::Channel& channel,
                                             const RopeConfig& config, std::uint64_t seed) {
  if (buffer.empty()) throw PreconditionViolation("generate_variants needs a nonempty failure buffer");
  const std::string current = render_prompt(state);
  const std::string digests = format_failures(buffer, config.digest_count);
  std::vector<PromptVariant> out;
  for (Axis axis : config.axes) {
    llm::ChatRequest req;
    req.system_text = std::string(text::trim(resource("templates/prompt_integration_system.txt")));
    req.user_text = text::substitute(resource("templates/rope_variant.txt"),
                                     {{"agent_name", role},
                                      {"axis", std::string(to_string(axis))},
                                      {"axis_guidance", std::string(axis_guidance(axis))},
                                      {"current_prompt", current},
                                      {"failure_digests", digests},
                                      {"char_budget", std::to_string(state.char_budget)}});
    req.temperature = config.variant_temperature;
    req.max_tokens = 2048;
    req.tag = "rope.variant";
    req.trace = role;
    std::optional<std::string> accepted;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      req.seed = derive_seed(seed, std::string(to_string(axis)) + "/" + std::to_string(attempt));
      std::string candidate;
      try {
        candidate = text::trim(channel.complete(req).text);
      } catch (const BackendUnavailable& ex) {
        spdlog::warn("{}: {} variant request failed: {}", role, to_string(axis), ex.what());
        break;
      }
      if (candidate.empty()) continue;
      if (candidate.find(state.core_text) == std::string::npos) {
        spdlog::warn("{}: {} variant dropped the core role text", role, to_string(axis));
        continue;
      }
      if (candidate.size() > state.char_budget) {
        spdlog::warn("{}: {} variant exceeds the {} character budget", role, to_string(axis), state.char_budget);
        continue;
      }
      accepted = std::move(candidate);
    }
    if (accepted) out.push_back({axis, std::move(*accepted), std::nullopt});
  }
  return out;
}

VariantResult reexecute_with_variant(const FailureEntry& original, const std::string& role,
                                     const std::string& variant_text, const ExecutionConfig& exec,
                                     const ExecutionEnv& env, const std::string& trajectory_id, std::uint64_t seed) {
  ExecutionEnv replay = env;
  replay.prompt_overrides[role] = variant_text;
  VariantResult out;
  try {
    out.trajectory = execute(original.trajectory.plan, original.query, exec, replay, trajectory_id, seed);
    out.reward = eval::make_reward(out.trajectory, original.query.gold_answers);
    out.failed = out.trajectory.status == TrajectoryStatus::kFailed;
  } catch (const Error& ex) {
    spdlog::warn("{}: replay with variant failed: {}", trajectory_id, ex.what());
    out.trajectory.id = trajectory_id;
    out.trajectory.query_id = original.query.id;
    out.trajectory.plan = original.trajectory.plan;
    out.trajectory.status = TrajectoryStatus::kFailed;
    out.trajectory.error = StepError{0, "replay_error", ex.what()};
    out.failed = true;
  }
  return out;
}

Analysis contrastive_analysis(const AgentRole& role, const PromptState& state,
                              const std::vector<PromptVariant>& variants, const llm::Channel& channel,
                              const RopeConfig& config, std::uint64_t seed) {
  Analysis out;
  std::vector<const PromptVariant*> scored;
  for (const auto& v : variants)
    if (v.result) scored.push_back(&v);
  if (scored.size() < 2) return out;
  const auto [lo, hi] = std::minmax_element(scored.begin(), scored.end(), [](const auto* a, const auto* b) {
    return a->result->reward.f1 < b->result->reward.f1;
  });
  if ((*lo)->result->reward.f1 == (*hi)->result->reward.f1) return out;

  std::ostringstream results;
  results.precision(3);
  results << std::fixed;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& v = *scored[i];
    if (i) results << "\n\n";
    results << "Variant " << i + 1 << " (" << to_string(v.axis) << ")\n";
    results << "- Variant prompt: " << v.text << "\n";
    results << "- Re-executed trajectory:";
    for (const auto& r : v.result->trajectory.records)
      results << "\n    " << r.step_index << ". " << r.agent << ": "
              << text::collapse_whitespace(text::truncate_utf8(r.output_text, kResultChars));
    results << "\n    Final answer: "
            << (v.result->trajectory.final_answer.empty() ? "(none)" : v.result->trajectory.final_answer) << "\n";
    results << "- F1 score: " << v.result->reward.f1 << "\n";
    results << "- Tokens used: " << v.result->reward.total_tokens;
  }

  llm::ChatRequest req;
  req.system_text = std::string(text::trim(resource("templates/prompt_integration_system.txt")));
  req.user_text = text::substitute(resource("templates/rope_analysis.txt"),
                                   {{"agent_name", role.name},
                                    {"agent_role", role.description},
                                    {"original_prompt", render_prompt(state)},
                                    {"variant_results", results.str()},
                                    {"K", std::to_string(config.max_rules)}});
  req.temperature = 0.0;
  req.max_tokens = 2048;
  req.tag = "rope.analysis";
  req.seed = seed;
  req.trace = role.name;
  out.called = true;
  try {
    const Json value = llm::complete_json(channel, req, llm::Schema::kRopeAnalysis);
    out.delta = delta_from_json(value);
    out.updated_prompt = value.value("updated_prompt", "");
  } catch (const MalformedStructuredOutput& ex) {
    spdlog::warn("{}: contrastive analysis produced no usable output: {}", role.name, ex.what());
  } catch (const BackendUnavailable& ex) {
    spdlog::warn("{}: contrastive analysis failed: {}", role.name, ex.what());
  }
  return out;
}

namespace {

// Items of `incoming` not too similar to `existing` or to each other.
std::vector<std::string> fresh_items(const std::vector<std::string>& existing, const std::vector<DeltaItem>& incoming,
                                     double threshold) {
  std::vector<std::set<std::string>> seen;
  for (const auto& e : existing) seen.push_back(text::token_set(e));
  std::vector<std::string> out;
  for (const auto& item : incoming) {
    const std::string t = text::collapse_whitespace(item.text);
    if (t.empty()) continue;
    const auto tokens = text::token_set(t);
    const bool dup = std::any_of(seen.begin(), seen.end(), [&](const auto& s) { return text::jaccard(s, tokens) > threshold; });
    if (dup) continue;
    seen.push_back(tokens);
    out.push_back(t);
  }
  return out;
}

void evict_front(std::vector<std::string>& items, std::size_t cap) {
  if (items.size() > cap) items.erase(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(items.size() - cap));
}

}  // namespace

std::optional<PromptState> consolidate(const PromptState& state, const PromptDelta& delta, const RopeConfig& config) {
  const auto new_rules = fresh_items(state.operational_rules, delta.operational_rules, config.dedup_threshold);
  const auto new_principles =
      fresh_items(state.behavioral_principles, delta.behavioral_principles, config.dedup_threshold);
  if (new_rules.empty() && new_principles.empty()) return std::nullopt;

  PromptState next = state;
  next.operational_rules.insert(next.operational_rules.end(), new_rules.begin(), new_rules.end());
  next.behavioral_principles.insert(next.behavioral_principles.end(), new_principles.begin(), new_principles.end());
  evict_front(next.operational_rules, config.max_rules);
  evict_front(next.behavioral_principles, config.max_principles);
  while (render_prompt(next).size() > next.char_budget) {
    if (!next.operational_rules.empty()) {
      next.operational_rules.erase(next.operational_rules.begin());
    } else if (!next.behavioral_principles.empty()) {
      next.behavioral_principles.erase(next.behavioral_principles.begin());
    } else {
      return std::nullopt;
    }
  }
  auto survives = [](const std::vector<std::string>& items, const std::vector<std::string>& added) {
    return std::any_of(added.begin(), added.end(),
                       [&](const auto& a) { return std::find(items.begin(), items.end(), a) != items.end(); });
  };
  if (!survives(next.operational_rules, new_rules) && !survives(next.behavioral_principles, new_principles))
    return std::nullopt;
  next.version = state.version + 1;
  return next;
}

Json provenance(const PromptDelta& delta, const RopeConfig& config, const std::string& trigger) {
  return Json{{"kind", "rope"},
              {"trigger", trigger},
              {"delta", to_json(delta)},
              {"max_rules", config.max_rules},
              {"max_principles", config.max_principles},
              {"dedup_threshold", config.dedup_threshold}};
}

PromptState replay_history(const PromptHistory& history) {
  const auto& versions = history.versions();
  if (versions.empty()) throw PreconditionViolation("empty prompt history");
  PromptState state = versions.front().state;
  for (std::size_t i = 1; i < versions.size(); ++i) {
    const Json& p = versions[i].provenance;
    if (p.value("kind", "") != "rope") throw Error("prompt version " + std::to_string(versions[i].state.version) +
                                                   " has no replayable provenance");
    RopeConfig c;
    c.max_rules = p.at("max_rules").get<std::size_t>();
    c.max_principles = p.at("max_principles").get<std::size_t>();
    c.dedup_threshold = p.at("dedup_threshold").get<double>();
    auto next = consolidate(state, delta_from_json(p.at("delta")), c);
    if (!next) throw Error("recorded delta for version " + std::to_string(versions[i].state.version) + " does not apply");
    state = std::move(*next);
  }
  return state;
}

EvolveOutcome evolve_agent(const std::string& role, const FailureEntry& blamed, FailureBuffer& buffer,
                           const PromptState& current, const RopeEnv& env, const RopeConfig& config,
                           std::uint64_t seed) {
  const AgentRole* agent = env.registry->find(role);
  if (!agent) throw PreconditionViolation("evolve_agent: unknown role " + role);
  buffer.push(blamed);

  EvolveOutcome out;
  Json& audit = out.audit;
  audit = Json{{"role", role},
               {"trigger", blamed.trajectory.id},
               {"original_f1", blamed.reward.f1},
               {"version", current.version},
               {"axes", Json::array()},
               {"rewards", Json::array()},
               {"adopted", false},
               {"delta", to_json(PromptDelta{})}};

  const llm::Channel orchestrator(*env.orchestrator_backend, env.sink);
  auto variants = generate_variants(role, current, buffer, orchestrator, config, derive_seed(seed, "variants"));
  if (variants.empty()) {
    audit["outcome"] = "no_variants";
    return out;
  }

  ExecutionEnv xenv;
  xenv.registry = env.registry;
  xenv.prompts = env.prompts;
  xenv.index = env.index;
  xenv.backend = env.agent_backend;
  xenv.sink = env.sink;
  double best = 0.0;
  for (auto& v : variants) {
    const std::string axis(to_string(v.axis));
    v.result = reexecute_with_variant(blamed, role, v.text, env.exec, xenv, blamed.trajectory.id + "/rope/" + axis,
                                      derive_seed(seed, "replay/" + axis));
    best = std::max(best, v.result->reward.f1);
    audit["axes"].push_back(axis);
    audit["rewards"].push_back(v.result->reward.f1);
  }

  const Analysis analysis = contrastive_analysis(*agent, current, variants, orchestrator, config, derive_seed(seed, "analysis"));
  audit["delta"] = to_json(analysis.delta);
  if (!analysis.called) {
    audit["outcome"] = "no_contrast";
    return out;
  }
  if (analysis.delta.empty()) {
    audit["outcome"] = "empty_delta";
    return out;
  }
  if (!(best > blamed.reward.f1)) {
    audit["outcome"] = "no_improvement";
    return out;
  }
  auto next = consolidate(current, analysis.delta, config);
  if (!next) {
    audit["outcome"] = "rejected";
    return out;
  }
  audit["adopted"] = true;
  audit["outcome"] = "adopted";
  audit["version"] = next->version;
  out.adopted = std::move(next);
  return out;
}

}  // namespace evorag::rope
