#include <doctest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "evorag/error.hpp"
#include "evorag/executor.hpp"
#include "support.hpp"

using namespace evorag;
using support::plan;
using support::step;

namespace {

// Echoes "<agent>(<sorted upstream steps>)"; records concurrency and can fail
// or report latency for chosen agents.
class EchoBackend : public llm::Backend {
 public:
  std::string fail_agent;
  std::string slow_agent;
  std::chrono::milliseconds sleep{0};
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  std::mutex mu;
  std::vector<std::string> users;

 protected:
  llm::ChatResponse do_complete(const llm::ChatRequest& r) override {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(sleep);
    --active;
    {
      std::lock_guard lock(mu);
      users.push_back(r.user_text);
    }
    const std::string agent = r.tag.substr(6);
    if (!fail_agent.empty() && agent == fail_agent) throw BackendUnavailable("down");
    llm::ChatResponse resp;
    resp.text = agent == "Retriever.search" ? "Search: paris" : "Answer: " + agent;
    resp.tokens_in = 10;
    resp.tokens_out = 1;
    if (agent == slow_agent) resp.latency_ms = 5000;
    return resp;
  }
};

struct Fixture {
  AgentRegistry registry = AgentRegistry::standard();
  PromptSet prompts = PromptStore::defaults(registry).snapshot();
  retrieval::LexicalIndex index = retrieval::LexicalIndex::ingest(support::fixture("world/corpus.jsonl"));
  EchoBackend backend;
  llm::CallBuffer calls;
  ExecutionEnv env() { return {&registry, &prompts, {}, &index, &backend, &calls}; }
  Query query = support::query("q1", "What is the capital of France?", {"Paris"});
};

}  // namespace

TEST_CASE("derive_seed is stable and label-sensitive") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}

TEST_CASE("chain plan runs in order and returns the terminal answer") {
  Fixture f;
  const auto t = execute(support::chain_plan(), f.query, {}, f.env(), "traj", 1);
  CHECK(t.status == TrajectoryStatus::kCompleted);
  CHECK(t.final_answer == "AnswerGenerator");
  REQUIRE(t.records.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(t.records[i].step_index == i + 1);
  CHECK(t.records[1].tool_calls.size() == 1);
  CHECK(t.records[3].input_text.find("Context from step 3:\nAnswer: EvidenceSelector") != std::string::npos);
  CHECK(t.total_tokens() == 55);
  CHECK(f.calls.records().size() == 5);
  CHECK(f.calls.records()[1].tag == "agent.Retriever.search");
}

TEST_CASE("parallel steps overlap and join in step order") {
  Fixture f;
  f.backend.sleep = std::chrono::milliseconds(60);
  const auto p = plan({step(1, "QueryDecomposer"), step(2, "EvidenceSelector", {1}, StepMode::kParallel),
                       step(3, "ContextValidator", {1}, StepMode::kParallel),
                       step(4, "ReflectAgent", {1}, StepMode::kParallel), step(5, "AnswerGenerator", {2, 3, 4})});
  ExecutionConfig cfg;
  cfg.parallelism = 3;
  const auto t = execute(p, f.query, cfg, f.env(), "traj", 1);
  CHECK(f.backend.peak == 3);
  CHECK(t.final_answer == "AnswerGenerator");
  std::vector<std::string> tags;
  for (const auto& c : f.calls.records()) tags.push_back(c.tag);
  CHECK(tags == std::vector<std::string>{"agent.QueryDecomposer", "agent.EvidenceSelector", "agent.ContextValidator",
                                         "agent.ReflectAgent", "agent.AnswerGenerator"});
}

TEST_CASE("parallelism cap is honored") {
  Fixture f;
  f.backend.sleep = std::chrono::milliseconds(30);
  const auto p = plan({step(1, "QueryDecomposer"), step(2, "EvidenceSelector", {1}, StepMode::kParallel),
                       step(3, "ContextValidator", {1}, StepMode::kParallel),
                       step(4, "ReflectAgent", {1}, StepMode::kParallel), step(5, "AnswerGenerator", {2, 3, 4})});
  ExecutionConfig cfg;
  cfg.parallelism = 2;
  const auto t = execute(p, f.query, cfg, f.env(), "traj", 1);
  CHECK(f.backend.peak == 2);
  CHECK(t.status == TrajectoryStatus::kCompleted);
}

TEST_CASE("a failing step skips its dependents and fails the trajectory") {
  Fixture f;
  f.backend.fail_agent = "EvidenceSelector";
  const auto t = execute(support::chain_plan(), f.query, {}, f.env(), "traj", 1);
  CHECK(t.status == TrajectoryStatus::kFailed);
  CHECK(t.final_answer.empty());
  REQUIRE(t.error);
  CHECK(t.error->step_index == 3);
  CHECK(t.error->kind == "backend_unavailable");
  CHECK(t.records.size() == 3);
  CHECK(f.calls.records().back().ok == false);
}

TEST_CASE("step timeout") {
  Fixture f;
  f.backend.slow_agent = "QueryDecomposer";
  ExecutionConfig cfg;
  cfg.step_timeout = std::chrono::milliseconds(1000);
  const auto t = execute(support::chain_plan(), f.query, cfg, f.env(), "traj", 1);
  CHECK(t.status == TrajectoryStatus::kFailed);
  REQUIRE(t.error);
  CHECK(t.error->kind == "timeout");
  CHECK(t.records.size() == 1);
}

TEST_CASE("prompt overrides replace the system text") {
  Fixture f;
  llm::ScriptedBackend b = llm::ScriptedBackend::from_jsonl(R"({"tag":"agent.AnswerGenerator","system_contains":"OVERRIDE","response":"Answer: yes"}
{"tag":"*","response":"Answer: no"})");
  auto env = f.env();
  env.backend = &b;
  const auto p = plan({step(1, "AnswerGenerator")});
  CHECK(execute(p, f.query, {}, env, "t", 1).final_answer == "no");
  env.prompt_overrides["AnswerGenerator"] = "OVERRIDE";
  CHECK(execute(p, f.query, {}, env, "t", 1).final_answer == "yes");
}

TEST_CASE("preconditions") {
  Fixture f;
  CHECK_THROWS_AS(execute(plan({step(1, "Oracle")}), f.query, {}, f.env(), "t", 1), PreconditionViolation);
  ExecutionConfig cfg;
  cfg.max_steps = 3;
  CHECK_THROWS_AS(execute(support::chain_plan(), f.query, cfg, f.env(), "t", 1), PreconditionViolation);
  cfg = {};
  cfg.parallelism = 0;
  CHECK_THROWS_AS(check_execution_config(cfg), PreconditionViolation);
}

TEST_CASE("identical inputs give identical trajectories") {
  Fixture a, b;
  const auto ta = execute(support::chain_plan(), a.query, {}, a.env(), "t", 9);
  const auto tb = execute(support::chain_plan(), b.query, {}, b.env(), "t", 9);
  CHECK(Json(ta) == Json(tb));
}
