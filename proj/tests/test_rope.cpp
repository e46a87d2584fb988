#include <doctest.h>

#include <random>

#include "evorag/error.hpp"
#include "evorag/evaluation.hpp"
#include "evorag/rope.hpp"
#include "evorag/text.hpp"
#include "support.hpp"

using namespace evorag;
using namespace evorag::rope;

namespace {

PromptState base_state(std::size_t budget = 6000) {
  return {"AnswerGenerator", "You answer questions.", {}, {}, 1, budget};
}

PromptDelta rules(std::vector<std::string> rs, std::vector<std::string> ps = {}) {
  PromptDelta d;
  for (auto& r : rs) d.operational_rules.push_back({r, "test"});
  for (auto& p : ps) d.behavioral_principles.push_back({p, "test"});
  return d;
}

llm::ScriptEntry entry(std::string tag, std::string response, std::string user_contains = "") {
  llm::ScriptEntry e;
  e.tag = std::move(tag);
  e.user_contains = std::move(user_contains);
  e.responses = {{std::move(response), 1.0}};
  return e;
}

const char* kFix = "Before answering, restate what the question asks and answer it directly.";

struct World {
  AgentRegistry registry = AgentRegistry::standard();
  PromptSet prompts = PromptStore::defaults(registry).snapshot();
  retrieval::LexicalIndex index = retrieval::LexicalIndex::ingest(support::fixture("world/corpus.jsonl"));
  llm::ScriptedBackend agents{llm::load_script(support::fixture("world/agents.jsonl"))};
  llm::ScriptedBackend orch{llm::load_script(support::fixture("world/orchestrator.jsonl"))};
  RopeEnv env() { return {&registry, &prompts, &index, &agents, &orch, nullptr, {}}; }

  // Plan B (AnswerGenerator alone) on the Seine question: scores zero.
  FailureEntry failure() {
    FailureEntry f;
    f.query = support::query("t1", "Which river flows through the city where the Eiffel Tower stands?", {"Seine"});
    ExecutionEnv x{&registry, &prompts, {}, &index, &agents, nullptr};
    f.trajectory = execute(support::plan({support::step(1, "AnswerGenerator")}), f.query, {}, x, "it1/m3", 1);
    f.reward = eval::make_reward(f.trajectory, f.query.gold_answers);
    return f;
  }
};

}  // namespace

TEST_CASE("axes") {
  CHECK(all_axes().size() == 5);
  for (Axis a : all_axes()) {
    CHECK(parse_axis(to_string(a)) == a);
    CHECK_FALSE(axis_guidance(a).empty());
  }
  CHECK(parse_axis("speed") == std::nullopt);
}

TEST_CASE("config checks") {
  RopeConfig c;
  CHECK_NOTHROW(check_rope_config(c));
  c.axes.clear();
  CHECK_THROWS_AS(check_rope_config(c), ConfigError);
  c = {};
  c.dedup_threshold = 1.5;
  CHECK_THROWS_AS(check_rope_config(c), ConfigError);
}

TEST_CASE("failure buffer keeps the newest entries") {
  FailureBuffer b("AnswerGenerator", 2);
  for (int i = 0; i < 3; ++i) {
    FailureEntry f;
    f.query = support::query("q" + std::to_string(i), "text", {"x"});
    b.push(f);
  }
  REQUIRE(b.entries().size() == 2);
  CHECK(b.entries()[0].query.id == "q2");
  CHECK(b.entries()[1].query.id == "q1");
  CHECK(FailureBuffer::from_json(b.to_json()).to_json() == b.to_json());
  CHECK(format_failures(FailureBuffer("x", 1), 3) == "(none)");
}

TEST_CASE("consolidate appends and bumps the version") {
  const auto next = consolidate(base_state(), rules({"Cite passages."}, {"Be grounded."}), {});
  REQUIRE(next);
  CHECK(next->version == 2);
  CHECK(next->operational_rules == std::vector<std::string>{"Cite passages."});
  CHECK(next->behavioral_principles == std::vector<std::string>{"Be grounded."});
  CHECK(next->core_text == base_state().core_text);
}

TEST_CASE("consolidate drops near-duplicates and rejects empty results") {
  auto s = base_state();
  s.operational_rules = {"cite the passage ids in the answer"};
  CHECK_FALSE(consolidate(s, rules({"Cite the passage IDs in the answer."}), {}));
  CHECK_FALSE(consolidate(s, rules({}), {}));
  const auto next = consolidate(s, rules({"check dates", "Check dates!", "name the source"}), {});
  REQUIRE(next);
  CHECK(next->operational_rules.size() == 3);
}

TEST_CASE("consolidate evicts oldest first") {
  RopeConfig c;
  c.max_rules = 2;
  auto s = base_state();
  s.operational_rules = {"alpha rule", "beta rule"};
  const auto next = consolidate(s, rules({"gamma item"}), c);
  REQUIRE(next);
  CHECK(next->operational_rules == std::vector<std::string>{"beta rule", "gamma item"});
}

TEST_CASE("budget eviction removes rules before principles") {
  auto s = base_state(90);
  s.behavioral_principles = {"pp"};
  s.operational_rules = {"old rule one"};
  const auto next = consolidate(s, rules({"new rule two"}), {});
  REQUIRE(next);
  CHECK(render_prompt(*next).size() <= 90);
  CHECK(next->operational_rules == std::vector<std::string>{"new rule two"});
  CHECK(next->behavioral_principles == std::vector<std::string>{"pp"});
  CHECK_FALSE(consolidate(base_state(25), rules({"a much too long rule for this budget"}), {}));
}

TEST_CASE("random consolidation sequences keep caps, budget and core, and replay exactly") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> words = {"check", "dates", "cite", "sources", "verify", "names", "avoid", "guessing",
                                          "list", "facts", "compare", "years"};
  RopeConfig c;
  c.max_rules = 4;
  c.max_principles = 2;
  PromptHistory h(base_state(220));
  for (int t = 0; t < 300; ++t) {
    std::vector<std::string> rs, ps;
    for (std::size_t k = rng() % 3; k > 0; --k) {
      std::string item;
      for (std::size_t w = 0, n = 2 + rng() % 4; w < n; ++w) item += words[rng() % words.size()] + " ";
      (rng() % 2 ? rs : ps).push_back(item);
    }
    const auto delta = rules(rs, ps);
    const auto next = consolidate(h.current(), delta, c);
    if (!next) continue;
    CHECK(next->operational_rules.size() <= c.max_rules);
    CHECK(next->behavioral_principles.size() <= c.max_principles);
    CHECK(render_prompt(*next).size() <= next->char_budget);
    CHECK(next->core_text == h.current().core_text);
    for (std::size_t i = 0; i < next->operational_rules.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        CHECK(text::jaccard(next->operational_rules[i], next->operational_rules[j]) <= c.dedup_threshold);
    h.push(*next, t, provenance(delta, c, "t"));
  }
  CHECK(h.versions().size() > 10);
  CHECK(replay_history(h) == h.current());
}

TEST_CASE("variants must keep the core text and fit the budget") {
  World w;
  FailureBuffer buf("AnswerGenerator", 10);
  buf.push(w.failure());
  llm::ScriptedBackend b;
  b.add(entry("rope.variant", "rewritten without the core", "Behavioral axis: efficiency"));
  b.add(entry("rope.variant", "{{block}}\n\n" + std::string(100, 'x'), "Behavioral axis: thoroughness"));
  b.add(entry("rope.variant", "{{block}}\nExtra."));
  auto state = w.prompts.at("AnswerGenerator");
  state.char_budget = render_prompt(state).size() + 20;
  const auto vs = generate_variants("AnswerGenerator", state, buf, llm::Channel(b, nullptr), {}, 1);
  CHECK(vs.size() == 3);
  for (const auto& v : vs) CHECK(v.text.find(state.core_text) != std::string::npos);
  CHECK(b.call_count() == 7);
  CHECK_THROWS_AS(generate_variants("AnswerGenerator", state, FailureBuffer("x", 1), llm::Channel(b, nullptr), {}, 1),
                  PreconditionViolation);
}

TEST_CASE("contrastive analysis needs differing rewards") {
  World w;
  const auto& role = *w.registry.find("AnswerGenerator");
  std::vector<PromptVariant> vs(2);
  vs[0].result = VariantResult{};
  vs[1].result = VariantResult{};
  auto a = contrastive_analysis(role, base_state(), vs, llm::Channel(w.orch, nullptr), {}, 1);
  CHECK_FALSE(a.called);
  vs[1].result->reward.f1 = 1.0;
  a = contrastive_analysis(role, base_state(), vs, llm::Channel(w.orch, nullptr), {}, 1);
  CHECK(a.called);
  CHECK(a.delta.operational_rules.size() == 1);
  CHECK(a.delta.behavioral_principles.size() == 1);
  CHECK(w.orch.call_count("rope.analysis") == 1);
}

TEST_CASE("evolve_agent adopts a delta when a variant beats the original") {
  World w;
  FailureBuffer buf("AnswerGenerator", 10);
  const auto failure = w.failure();
  REQUIRE(failure.reward.f1 == 0.0);
  const auto current = w.prompts.at("AnswerGenerator");
  const auto out = evolve_agent("AnswerGenerator", failure, buf, current, w.env(), {}, 3);
  REQUIRE(out.adopted);
  CHECK(out.adopted->version == 2);
  CHECK(out.adopted->core_text == current.core_text);
  CHECK(out.audit["outcome"] == "adopted");
  CHECK(out.audit["axes"].size() == 5);
  CHECK(buf.entries().size() == 1);
  CHECK(w.orch.call_count("rope.variant") == 5);
  const auto rewards = out.audit["rewards"].get<std::vector<double>>();
  CHECK(*std::max_element(rewards.begin(), rewards.end()) == 1.0);
}

TEST_CASE("evolve_agent soft failures change nothing") {
  World w;
  FailureBuffer buf("AnswerGenerator", 10);
  const auto failure = w.failure();
  const auto current = w.prompts.at("AnswerGenerator");

  llm::ScriptedBackend same;
  same.add(entry("rope.variant", "{{block}}"));
  auto env = w.env();
  env.orchestrator_backend = &same;
  auto out = evolve_agent("AnswerGenerator", failure, buf, current, env, {}, 3);
  CHECK_FALSE(out.adopted);
  CHECK(out.audit["outcome"] == "no_contrast");

  llm::ScriptedBackend lossy;
  lossy.add(entry("rope.variant", "no core"));
  env.orchestrator_backend = &lossy;
  out = evolve_agent("AnswerGenerator", failure, buf, current, env, {}, 3);
  CHECK(out.audit["outcome"] == "no_variants");

  auto won = failure;
  won.reward.f1 = 1.0;
  out = evolve_agent("AnswerGenerator", won, buf, current, w.env(), {}, 3);
  CHECK(out.audit["outcome"] == "no_improvement");
  CHECK(buf.entries().size() == 3);
}
