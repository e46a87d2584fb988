#include "evorag/executor.hpp"

#include <future>
#include <set>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag {

void check_execution_config(const ExecutionConfig& config) {
  if (config.max_steps < 1) throw PreconditionViolation("max_steps must be >= 1");
  if (config.step_timeout.count() <= 0) throw PreconditionViolation("step_timeout must be positive");
  if (config.parallelism < 1) throw PreconditionViolation("parallelism must be >= 1");
  if (config.top_k_per_step < 1) throw PreconditionViolation("top_k_per_step must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  return text::fnv1a64(label, text::fnv1a64(std::to_string(base)));
}

namespace {

struct StepOutcome {
  StepRecord record;
  llm::CallBuffer calls;
  std::optional<StepError> error;
};

StepOutcome run_step(const PlanStep& step, const Query& query, const std::map<int, std::string>& outputs,
                     const ExecutionConfig& config, const ExecutionEnv& env, const std::string& trajectory_id,
                     std::uint64_t seed) {
  StepOutcome out;
  out.record.step_index = step.step_index;
  out.record.agent = step.agent;

  agents::AgentInput input;
  input.query_text = query.text;
  for (int d : step.depends_on) input.upstream_outputs.emplace(d, outputs.at(d));
  out.record.input_text = agents::build_user_message(input);

  const AgentRole* role = env.registry->find(step.agent);
  std::string system_prompt;
  if (auto it = env.prompt_overrides.find(step.agent); it != env.prompt_overrides.end()) {
    system_prompt = it->second;
  } else {
    system_prompt = render_prompt(env.prompts->at(step.agent));
  }
  const agents::CallContext ctx{config.temperature,
                                derive_seed(seed, "step" + std::to_string(step.step_index)), trajectory_id};
  const agents::AgentRuntime runtime{env.index, config.top_k_per_step, config.agent_max_tokens};
  const llm::Channel channel(*env.backend, &out.calls);

  const auto started = std::chrono::steady_clock::now();
  try {
    agents::AgentOutput result = agents::run_agent(*role, system_prompt, input, channel, ctx, runtime);
    out.record.output_text = std::move(result.output_text);
    out.record.tool_calls = std::move(result.tool_calls);
    out.record.tokens_in = result.tokens_in;
    out.record.tokens_out = result.tokens_out;
    out.record.wall_ms = result.wall_ms;
    const auto elapsed = std::chrono::steady_clock::now() - started;
    if (elapsed > config.step_timeout || std::chrono::milliseconds(result.wall_ms) > config.step_timeout) {
      out.error = StepError{step.step_index, "timeout", "step exceeded " + std::to_string(config.step_timeout.count()) + " ms"};
    }
  } catch (const BackendUnavailable& ex) {
    out.error = StepError{step.step_index, "backend_unavailable", ex.what()};
    for (const auto& c : out.calls.records()) {
      out.record.tokens_in += c.tokens_in;
      out.record.tokens_out += c.tokens_out;
    }
  }
  return out;
}

}  // namespace

Trajectory execute(const ExecutionPlan& plan, const Query& query, const ExecutionConfig& config,
                   const ExecutionEnv& env, const std::string& trajectory_id, std::uint64_t seed) {
  check_execution_config(config);
  if (!env.registry || !env.prompts || !env.backend) throw PreconditionViolation("execution environment incomplete");
  const auto validation = validate_plan(plan, *env.registry);
  if (!validation.ok()) throw PreconditionViolation("invalid plan: " + validation.describe());
  if (plan.steps.size() > config.max_steps)
    throw PreconditionViolation("plan has " + std::to_string(plan.steps.size()) + " steps, cap is " +
                                std::to_string(config.max_steps));

  Trajectory traj;
  traj.id = trajectory_id;
  traj.query_id = query.id;
  traj.plan = plan;

  std::map<int, std::string> outputs;  // completed steps
  std::set<int> dead;                  // failed or skipped steps
  std::map<int, StepOutcome> outcomes;

  auto deps_done = [&](const PlanStep& s) {
    for (int d : s.depends_on)
      if (!outputs.count(d)) return false;
    return true;
  };

  auto run_batch = [&](const std::vector<const PlanStep*>& batch) {
    if (batch.empty()) return;
    std::vector<StepOutcome> results(batch.size());
    if (batch.size() == 1) {
      results[0] = run_step(*batch[0], query, outputs, config, env, trajectory_id, seed);
    } else {
      std::vector<std::future<StepOutcome>> futures;
      for (const PlanStep* s : batch) {
        futures.push_back(std::async(std::launch::async, [&, s] {
          return run_step(*s, query, outputs, config, env, trajectory_id, seed);
        }));
      }
      for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
    }
    for (auto& r : results) {
      const int idx = r.record.step_index;
      if (r.error) {
        dead.insert(idx);
        if (!traj.error) traj.error = r.error;
        spdlog::warn("{}: step {} failed ({}): {}", trajectory_id, idx, r.error->kind, r.error->message);
      }
      outcomes.emplace(idx, std::move(r));
    }
    // Outputs are published only after the whole batch finished so every
    // step input is a pure function of its dependencies.
    for (const PlanStep* s : batch)
      if (!dead.count(s->step_index)) outputs.emplace(s->step_index, outcomes.at(s->step_index).record.output_text);
  };

  std::vector<const PlanStep*> batch;
  for (const auto& step : plan.steps) {
    bool skip = false;
    for (int d : step.depends_on) skip = skip || dead.count(d) > 0;
    if (!skip) {
      // A dependency that is still pending in the batch forces a flush.
      bool pending = false;
      for (int d : step.depends_on) pending = pending || !outputs.count(d);
      if (pending) {
        run_batch(batch);
        batch.clear();
        for (int d : step.depends_on) skip = skip || dead.count(d) > 0;
      }
    }
    if (skip) {
      dead.insert(step.step_index);
      continue;
    }
    if (step.mode == StepMode::kParallel) {
      batch.push_back(&step);
      if (batch.size() >= config.parallelism) {
        run_batch(batch);
        batch.clear();
      }
    } else {
      run_batch(batch);
      batch.clear();
      if (!deps_done(step)) {
        dead.insert(step.step_index);
        continue;
      }
      run_batch({&step});
    }
  }
  run_batch(batch);

  for (auto& [idx, outcome] : outcomes) {
    if (env.sink)
      for (auto& c : outcome.calls.take()) env.sink->record(std::move(c));
    traj.records.push_back(std::move(outcome.record));
  }

  const PlanStep& terminal = plan.steps[*plan.terminal()];
  if (traj.error || !outputs.count(terminal.step_index)) {
    traj.status = TrajectoryStatus::kFailed;
    traj.final_answer.clear();
  } else {
    traj.status = TrajectoryStatus::kCompleted;
    traj.final_answer = extract_answer(outputs.at(terminal.step_index));
  }
  return traj;
}

}  // namespace evorag
