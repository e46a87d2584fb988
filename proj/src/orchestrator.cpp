#include "evorag/orchestrator.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/resources.hpp"
#include "evorag/text.hpp"

namespace evorag::orchestrator {

namespace {
constexpr std::size_t kSummaryChars = 500;
}

std::string characterize_query(const Query& query) {
  if (query.reasoning_type == ReasoningType::kUnknown) return query.text;
  return std::string(to_string(query.reasoning_type)) + " question: " + query.text;
}

ExecutionPlan default_plan(const std::string& query_profile) {
  ExecutionPlan p;
  p.query_profile = query_profile;
  p.steps = {{1, std::string(roles::kQueryDecomposer), {}, StepMode::kSequential},
             {2, std::string(roles::kRetriever), {1}, StepMode::kSequential},
             {3, std::string(roles::kEvidenceSelector), {2}, StepMode::kSequential},
             {4, std::string(roles::kAnswerGenerator), {3}, StepMode::kSequential}};
  return p;
}

ExecutionPlan plan_from_response(const Json& value) {
  ExecutionPlan p;
  p.query_profile = text::collapse_whitespace(value.at("query_profile").get<std::string>());
  for (const auto& s : value.at("execution_order")) {
    PlanStep step;
    step.step_index = s.at("step").get<int>();
    step.agent = text::trim(s.at("agent").get<std::string>());
    step.depends_on = s.at("depends_on").get<std::vector<int>>();
    step.mode = parse_step_mode(s.at("mode").get<std::string>()).value_or(StepMode::kSequential);
    p.steps.push_back(std::move(step));
  }
  return p;
}

Json plan_to_response(const ExecutionPlan& plan) {
  Json order = Json::array();
  std::vector<std::string> agents;
  for (const auto& s : plan.steps) {
    order.push_back(Json{{"step", s.step_index}, {"agent", s.agent}, {"depends_on", s.depends_on}, {"mode", to_string(s.mode)}});
    if (std::find(agents.begin(), agents.end(), s.agent) == agents.end()) agents.push_back(s.agent);
  }
  return Json{{"query_profile", plan.query_profile}, {"selected_agents", agents}, {"execution_order", order}};
}

std::string format_agent_descriptions(const AgentRegistry& registry) {
  std::string out;
  for (const auto& r : registry.roles()) {
    if (!out.empty()) out += "\n";
    out += "- " + r.name + ": " + r.description;
    if (!r.tools.empty()) out += " (tools: " + text::join(r.tools, ", ") + ")";
  }
  return out;
}

std::string format_experiences(const std::vector<ExperienceEntry>& experiences) {
  if (experiences.empty()) return "(none)";
  std::ostringstream os;
  os.precision(2);
  os << std::fixed;
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const auto& e = experiences[i];
    if (i) os << "\n";
    os << "- Query Type: " << e.profile << "\n  Insight: " << e.insight << "\n  Utility score: " << e.utility();
  }
  return os.str();
}

SampledPlan sample_plan(const Query& query, const std::vector<ExperienceEntry>& experiences,
                        const AgentRegistry& registry, const llm::Channel& channel, const SampleOptions& options) {
  if (registry.empty()) throw PreconditionViolation("sample_plan needs a nonempty registry");
  llm::ChatRequest req;
  req.system_text = "You design multi-agent execution topologies for question answering. Respond only with JSON.";
  req.user_text = text::substitute(resource("templates/orchestrator_plan.txt"),
                                   {{"agent_descriptions", format_agent_descriptions(registry)},
                                    {"retrieved_experiences", format_experiences(experiences)},
                                    {"query", query.text}});
  req.temperature = options.temperature;
  req.max_tokens = 1024;
  req.tag = "orchestrator.sample";
  req.seed = options.seed;
  req.trace = query.id;

  const auto check = [&](const Json& v) -> std::optional<std::string> {
    const ExecutionPlan p = plan_from_response(v);
    const auto validation = validate_plan(p, registry);
    if (!validation.ok()) return "invalid plan: " + validation.describe();
    if (p.steps.size() > options.max_steps)
      return "plan has " + std::to_string(p.steps.size()) + " steps, at most " + std::to_string(options.max_steps) + " allowed";
    return std::nullopt;
  };

  SampledPlan out;
  try {
    out.plan = plan_from_response(llm::complete_json(channel, req, llm::Schema::kPlan, check));
    if (out.plan.query_profile.empty()) out.plan.query_profile = characterize_query(query);
    return out;
  } catch (const MalformedStructuredOutput& ex) {
    out.fallback_reason = ex.what();
  } catch (const BackendUnavailable& ex) {
    out.fallback_reason = ex.what();
  }
  spdlog::warn("{}: plan sampling fell back to the default plan: {}", query.id, out.fallback_reason);
  out.fallback = true;
  out.plan = default_plan(characterize_query(query));
  return out;
}

GroupRun run_group(const Query& query, const std::vector<ExperienceEntry>& experiences, const OrchestratorEnv& env,
                   const GroupOptions& options) {
  if (options.group_size < 2) throw PreconditionViolation("group size must be at least 2");
  if (query.gold_answers.empty()) throw PreconditionViolation("query " + query.id + " has no gold answers");
  const llm::Channel orchestrator(*env.orchestrator_backend, env.sink);

  GroupRun run;
  std::vector<ExecutionPlan> plans;
  for (std::size_t i = 0; i < options.group_size; ++i) {
    if (i < options.injected_plans.size()) {
      const auto& injected = options.injected_plans[i];
      if (validate_plan(injected, *env.registry).ok() && injected.steps.size() <= env.exec.max_steps) {
        plans.push_back(injected);
        run.fallback.push_back(false);
        run.injected.push_back(true);
        continue;
      }
      spdlog::warn("{}: injected plan is invalid, sampling instead", query.id);
    }
    SampleOptions so{options.rollout_temperature, derive_seed(options.seed, "sample" + std::to_string(i)),
                     env.exec.max_steps};
    auto sampled = sample_plan(query, experiences, *env.registry, orchestrator, so);
    plans.push_back(std::move(sampled.plan));
    run.fallback.push_back(sampled.fallback);
    run.injected.push_back(false);
  }

  ExecutionConfig exec = env.exec;
  exec.temperature = options.rollout_temperature;
  ExecutionEnv xenv;
  xenv.registry = env.registry;
  xenv.prompts = env.prompts;
  xenv.index = env.index;
  xenv.backend = env.agent_backend;

  const std::size_t g = plans.size();
  std::vector<llm::CallBuffer> buffers(g);
  std::vector<Trajectory> trajectories(g);
  auto run_member = [&](std::size_t i) {
    ExecutionEnv member_env = xenv;
    member_env.sink = &buffers[i];
    trajectories[i] = execute(plans[i], query, exec, member_env, options.id_prefix + "/m" + std::to_string(i),
                              derive_seed(options.seed, "exec" + std::to_string(i)));
  };
  const std::size_t width = std::max<std::size_t>(1, env.group_parallelism);
  for (std::size_t start = 0; start < g; start += width) {
    const std::size_t end = std::min(g, start + width);
    if (end - start == 1) {
      run_member(start);
      continue;
    }
    std::vector<std::future<void>> futures;
    for (std::size_t i = start; i < end; ++i) futures.push_back(std::async(std::launch::async, run_member, i));
    for (auto& f : futures) f.get();
  }
  if (env.sink)
    for (auto& b : buffers)
      for (auto& c : b.take()) env.sink->record(std::move(c));

  const bool all_unavailable = std::all_of(trajectories.begin(), trajectories.end(), [](const Trajectory& t) {
    return t.status == TrajectoryStatus::kFailed && t.error && t.error->kind == "backend_unavailable";
  });
  if (all_unavailable) throw BackendUnavailable("every member of the group for " + query.id + " lost the backend");

  std::vector<eval::GroupMember> members;
  for (std::size_t i = 0; i < g; ++i) {
    eval::GroupMember m;
    m.plan = plans[i];
    m.reward = eval::make_reward(trajectories[i], query.gold_answers);
    m.trajectory = std::move(trajectories[i]);
    members.push_back(std::move(m));
  }
  run.group = eval::make_group(query.id, std::move(members));
  return run;
}

std::string format_group(const eval::GroupRollout& group) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  int rank = 0;
  for (std::size_t idx : group.ranking.order) {
    const auto& m = group.members[idx];
    if (rank) os << "\n\n";
    os << "Trajectory " << ++rank << " (" << (group.succeeded(idx) ? "successful" : "failed") << ")\n";
    os << "Topology:";
    for (const auto& s : m.plan.steps) {
      os << "\n  " << s.step_index << ". " << s.agent << " [" << to_string(s.mode) << ", depends_on: ";
      if (s.depends_on.empty()) {
        os << "none";
      } else {
        for (std::size_t k = 0; k < s.depends_on.size(); ++k) os << (k ? "," : "") << s.depends_on[k];
      }
      os << "]";
    }
    os << "\nSteps:";
    for (const auto& r : m.trajectory.records) {
      os << "\n  Step " << r.step_index << " " << r.agent << ":";
      for (const auto& c : r.tool_calls) os << "\n    action: " << c.tool << " " << c.arguments << " -> [" << c.result_digest << "]";
      os << "\n    output: " << text::collapse_whitespace(text::truncate_utf8(r.output_text, kSummaryChars));
    }
    if (m.trajectory.error) os << "\n  Error at step " << m.trajectory.error->step_index << ": " << m.trajectory.error->kind;
    os << "\nFinal answer: " << (m.trajectory.final_answer.empty() ? "(none)" : m.trajectory.final_answer);
    os << "\nF1 score: " << m.reward.f1;
    os << "\nTotal tokens consumed: " << m.reward.total_tokens;
  }
  return os.str();
}

InsightBundle extract_insights(const eval::GroupRollout& group, const Query& query, const std::string& query_profile,
                               const llm::Channel& channel, std::uint64_t seed) {
  InsightBundle bundle;
  if (!group.mixed()) return bundle;

  llm::ChatRequest req;
  req.system_text = "You are the orchestrator of a multi-agent question answering system. Respond only with JSON.";
  req.user_text = text::substitute(resource("templates/insight_extraction.txt"),
                                   {{"query", query.text},
                                    {"query_type", query_profile},
                                    {"G", std::to_string(group.members.size())},
                                    {"trajectory_group", format_group(group)}});
  req.temperature = 0.0;
  req.max_tokens = 1024;
  req.tag = "orchestrator.extract";
  req.seed = seed;
  req.trace = query.id;

  Json value;
  try {
    value = llm::complete_json(channel, req, llm::Schema::kInsightGroup);
  } catch (const MalformedStructuredOutput& ex) {
    spdlog::warn("{}: insight extraction produced no usable output: {}", query.id, ex.what());
    return bundle;
  }
  bundle.success_factors = value.at("success_factors").get<std::vector<std::string>>();
  bundle.failure_modes = value.at("failure_modes").get<std::vector<std::string>>();
  for (const auto& i : value.at("insights")) {
    InsightItem item{text::collapse_whitespace(i.at("query_type").get<std::string>()),
                     text::collapse_whitespace(i.at("insight").get<std::string>())};
    if (item.query_type.empty()) item.query_type = query_profile;
    bundle.insights.push_back(std::move(item));
  }
  std::set<std::string> in_plans;
  for (const auto& m : group.members)
    for (const auto& s : m.plan.steps) in_plans.insert(s.agent);
  if (value.contains("blamed_agents")) {
    for (const auto& b : value.at("blamed_agents")) {
      const std::string name = text::trim(b.get<std::string>());
      if (!in_plans.count(name)) {
        spdlog::warn("{}: dropping blamed agent '{}' absent from the group's plans", query.id, name);
        continue;
      }
      if (std::find(bundle.blamed_agents.begin(), bundle.blamed_agents.end(), name) == bundle.blamed_agents.end())
        bundle.blamed_agents.push_back(name);
    }
  }
  return bundle;
}

std::string_view to_string(MutationKind k) { return k == MutationKind::kReplace ? "replace" : "augment"; }

ExecutionPlan replace_step(const ExecutionPlan& plan, int target_step, const std::string& agent) {
  ExecutionPlan out = plan;
  for (auto& s : out.steps)
    if (s.step_index == target_step) s.agent = agent;
  return out;
}

ExecutionPlan augment_after(const ExecutionPlan& plan, int target_step, const std::string& agent) {
  ExecutionPlan out;
  out.query_profile = plan.query_profile;
  const int inserted = target_step + 1;
  auto shift = [&](int idx) { return idx > target_step ? idx + 1 : idx; };
  for (const auto& s : plan.steps) {
    PlanStep copy = s;
    copy.step_index = shift(s.step_index);
    for (int& d : copy.depends_on) d = d == target_step ? inserted : shift(d);
    out.steps.push_back(std::move(copy));
    if (s.step_index == target_step) out.steps.push_back({inserted, agent, {target_step}, StepMode::kSequential});
  }
  return out;
}

int choose_blamed_step(const Trajectory& trajectory) {
  for (const auto& r : trajectory.records)
    for (const auto& c : r.tool_calls)
      if (c.tool == kSearchTool && c.result_digest.empty()) return r.step_index;
  if (trajectory.error) return trajectory.error->step_index;
  const auto terminal = trajectory.plan.terminal();
  return terminal ? trajectory.plan.steps[*terminal].step_index : trajectory.plan.steps.back().step_index;
}

MutationProposal propose_mutation(const std::string& query_profile, const ExecutionPlan& failing_plan,
                                  int blamed_step, const AgentRegistry& registry, const llm::Channel& channel,
                                  std::uint64_t seed) {
  const auto it = std::find_if(failing_plan.steps.begin(), failing_plan.steps.end(),
                               [&](const PlanStep& s) { return s.step_index == blamed_step; });
  if (it == failing_plan.steps.end()) throw PreconditionViolation("blamed step " + std::to_string(blamed_step) + " not in plan");
  const std::string blamed_agent = it->agent;

  std::string plan_text;
  for (const auto& s : failing_plan.steps) {
    std::vector<std::string> deps;
    for (int d : s.depends_on) deps.push_back(std::to_string(d));
    plan_text += std::to_string(s.step_index) + ". " + s.agent + " [" + std::string(to_string(s.mode)) +
                 ", depends_on: " + (deps.empty() ? "none" : text::join(deps, ",")) + "]\n";
  }
  llm::ChatRequest req;
  req.system_text = "You are the orchestrator of a multi-agent question answering system.";
  req.user_text = text::substitute(resource("templates/mutation.txt"),
                                   {{"query_profile", query_profile},
                                    {"plan", text::trim(plan_text)},
                                    {"blamed_step", std::to_string(blamed_step)},
                                    {"blamed_agent", blamed_agent},
                                    {"agent_descriptions", format_agent_descriptions(registry)}});
  req.temperature = 0.0;
  req.max_tokens = 64;
  req.tag = "orchestrator.mutation";
  req.seed = seed;

  std::optional<MutationKind> kind;
  std::string agent;
  try {
    const auto resp = channel.complete(req);
    std::istringstream lines(resp.text);
    std::string line;
    while (std::getline(lines, line)) {
      const std::string t = text::trim(line);
      if (text::starts_with_ci(t, "Kind:")) {
        const std::string k = text::to_lower(text::trim(std::string_view(t).substr(5)));
        if (k == "replace") kind = MutationKind::kReplace;
        if (k == "augment") kind = MutationKind::kAugment;
      } else if (text::starts_with_ci(t, "Agent:")) {
        agent = text::trim(std::string_view(t).substr(6));
      }
    }
  } catch (const BackendUnavailable& ex) {
    spdlog::warn("mutation proposal fell back to ReflectAgent: {}", ex.what());
  }

  MutationProposal p;
  p.target_step = blamed_step;
  const bool usable = kind && registry.contains(agent) && !(*kind == MutationKind::kReplace && agent == blamed_agent);
  if (usable) {
    p.kind = *kind;
    p.agent = agent;
  } else {
    p.kind = MutationKind::kAugment;
    p.agent = std::string(roles::kReflectAgent);
  }
  p.derived_plan = p.kind == MutationKind::kReplace ? replace_step(failing_plan, blamed_step, p.agent)
                                                    : augment_after(failing_plan, blamed_step, p.agent);
  if (!validate_plan(p.derived_plan, registry).ok()) {
    p.kind = MutationKind::kAugment;
    p.agent = std::string(roles::kReflectAgent);
    p.derived_plan = augment_after(failing_plan, blamed_step, p.agent);
  }
  return p;
}

}  // namespace evorag::orchestrator
