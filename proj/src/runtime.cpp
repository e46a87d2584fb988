#include "evorag/runtime.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "evorag/datasets.hpp"
#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag::runtime {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

BackendSettings backend_from_json(const Json& j, const fs::path& base) {
  BackendSettings b;
  b.kind = j.value("kind", "scripted");
  b.script = resolve(base, j.value("script", ""));
  b.http.endpoint = j.value("endpoint", "");
  b.http.model = j.value("model", "");
  b.http.api_key = j.value("api_key", "");
  b.http.retries = j.value("retries", 2);
  b.http.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 500));
  b.http.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
  return b;
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

void append_line(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to " + path.string());
  out << j.dump() << '\n';
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
}

std::uintmax_t size_or_zero(const fs::path& p) { return fs::exists(p) ? fs::file_size(p) : 0; }

const char* const kLogs[] = {files::kTrajectories, files::kIterations, files::kCalls, files::kRopeAudit};

// Per-role failure buffers, mutation streaks and pending mutation plans.
struct LoopState {
  std::map<std::string, rope::FailureBuffer> buffers;
  std::map<std::string, std::size_t> streaks;
  std::map<std::string, ExecutionPlan> pending;

  Json to_json() const {
    Json b = Json::object(), s = Json::object(), p = Json::object();
    for (const auto& [role, buf] : buffers) b[role] = buf.to_json();
    for (const auto& [k, v] : streaks) s[k] = v;
    for (const auto& [k, plan] : pending) p[k] = plan;
    return Json{{"buffers", b}, {"streaks", s}, {"pending_mutations", p}};
  }

  static LoopState from_json(const Json& j) {
    LoopState st;
    for (const auto& [role, buf] : j.at("buffers").items()) st.buffers[role] = rope::FailureBuffer::from_json(buf);
    for (const auto& [k, v] : j.at("streaks").items()) st.streaks[k] = v.get<std::size_t>();
    for (const auto& [k, plan] : j.at("pending_mutations").items()) st.pending[k] = plan.get<ExecutionPlan>();
    return st;
  }
};

Json trajectory_line(const Trajectory& t, const Reward& r, std::size_t iteration, std::size_t member,
                     const std::string& kind, const Query& q) {
  Json j = t;
  j["reward"] = r;
  j["meta"] = Json{{"iteration", iteration}, {"member", member}, {"kind", kind},
                   {"reasoning_type", to_string(q.reasoning_type)}};
  return j;
}

}  // namespace

RunConfig config_from_json(const Json& j, const fs::path& base) {
  RunConfig c;
  if (j.contains("backends")) {
    const Json& b = j.at("backends");
    if (b.contains("agent")) c.agent_backend = backend_from_json(b.at("agent"), base);
    if (b.contains("orchestrator")) c.orchestrator_backend = backend_from_json(b.at("orchestrator"), base);
  }
  c.state_dir = resolve(base, j.value("state_dir", "state"));
  c.library_path = resolve(base, j.value("library", ""));
  c.prompt_dir = resolve(base, j.value("prompts", ""));
  if (c.library_path.empty()) c.library_path = c.state_dir / "library.json";
  if (c.prompt_dir.empty()) c.prompt_dir = c.state_dir / "prompts";
  c.index_path = resolve(base, j.value("index", ""));
  c.train_path = resolve(base, j.value("train", ""));
  c.seed = j.value("seed", std::uint64_t{0});
  c.iterations = j.value("iterations", std::size_t{10});
  c.group_size = j.value("group_size", std::size_t{4});
  c.rollout_temperature = j.value("rollout_temperature", 0.9);
  c.eval_temperature = j.value("eval_temperature", 0.0);
  c.group_parallelism = j.value("group_parallelism", std::size_t{4});
  if (j.contains("execution")) {
    const Json& e = j.at("execution");
    c.exec.step_timeout = std::chrono::milliseconds(e.value("step_timeout_ms", std::int64_t{120000}));
    c.exec.max_steps = e.value("max_steps", c.exec.max_steps);
    c.exec.top_k_per_step = e.value("top_k_per_step", c.exec.top_k_per_step);
    c.exec.parallelism = e.value("parallelism", c.exec.parallelism);
    c.exec.agent_max_tokens = e.value("agent_max_tokens", c.exec.agent_max_tokens);
  }
  if (j.contains("library_config")) {
    const Json& l = j.at("library_config");
    c.library.max_entries = l.value("max_entries", c.library.max_entries);
    c.library.profile_match_threshold = l.value("profile_match_threshold", c.library.profile_match_threshold);
    c.library.diversity_threshold = l.value("diversity_threshold", c.library.diversity_threshold);
    c.library.dedup_threshold = l.value("dedup_threshold", c.library.dedup_threshold);
    c.library.retrieve_count = l.value("retrieve_count", c.library.retrieve_count);
  }
  if (j.contains("rope")) {
    const Json& r = j.at("rope");
    c.rope_enabled = r.value("enabled", true);
    c.rope.max_rules = r.value("max_rules", c.rope.max_rules);
    c.rope.max_principles = r.value("max_principles", c.rope.max_principles);
    c.rope.buffer_size = r.value("buffer_size", c.rope.buffer_size);
    c.rope.dedup_threshold = r.value("dedup_threshold", c.rope.dedup_threshold);
    c.rope.variant_temperature = r.value("variant_temperature", c.rope.variant_temperature);
    c.rope.digest_count = r.value("digest_count", c.rope.digest_count);
    c.prompt_char_budget = r.value("char_budget", c.prompt_char_budget);
    if (r.contains("axes")) {
      c.rope.axes.clear();
      for (const auto& a : r.at("axes")) {
        const auto axis = rope::parse_axis(a.get<std::string>());
        if (!axis) throw ConfigError("unknown rope axis " + a.dump());
        c.rope.axes.push_back(*axis);
      }
    }
  }
  if (j.contains("mutation")) {
    c.mutation_enabled = j.at("mutation").value("enabled", true);
    c.mutation_streak = j.at("mutation").value("streak", c.mutation_streak);
  }
  c.max_backend_failures = j.value("max_backend_failures", c.max_backend_failures);
  c.inference_success_f1 = j.value("inference_success_f1", c.inference_success_f1);
  return c;
}

void apply_env_overrides(RunConfig& c) {
  for (BackendSettings* b : {&c.agent_backend, &c.orchestrator_backend}) {
    if (b->kind != "http") continue;
    if (auto v = env("EVORAG_ENDPOINT")) b->http.endpoint = *v;
    if (auto v = env("EVORAG_API_KEY")) b->http.api_key = *v;
    if (auto v = env("EVORAG_MODEL")) b->http.model = *v;
  }
  if (c.orchestrator_backend.kind == "http")
    if (auto v = env("EVORAG_ORCHESTRATOR_MODEL")) c.orchestrator_backend.http.model = *v;
}

RunConfig load_config(const fs::path& path) {
  Json j;
  try {
    j = read_json(path);
    RunConfig c = config_from_json(j, fs::absolute(path).parent_path());
    apply_env_overrides(c);
    check_config(c);
    return c;
  } catch (const Json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
}

void check_config(const RunConfig& c) {
  auto temp = [](double t, const char* name) {
    if (t < 0.0 || t > 2.0) throw ConfigError(std::string(name) + " must be in [0, 2]");
  };
  temp(c.rollout_temperature, "rollout_temperature");
  temp(c.eval_temperature, "eval_temperature");
  if (c.group_size < 2) throw ConfigError("group_size must be at least 2");
  if (c.group_parallelism == 0) throw ConfigError("group_parallelism must be positive");
  if (c.library.max_entries == 0) throw ConfigError("library max_entries must be positive");
  if (c.library.retrieve_count == 0) throw ConfigError("library retrieve_count must be positive");
  if (c.mutation_streak == 0) throw ConfigError("mutation streak must be positive");
  if (c.prompt_char_budget == 0) throw ConfigError("char_budget must be positive");
  for (const BackendSettings* b : {&c.agent_backend, &c.orchestrator_backend}) {
    if (b->kind == "scripted") {
      if (b->script.empty()) throw ConfigError("scripted backend needs a script path");
    } else if (b->kind == "http") {
      if (b->http.endpoint.empty()) throw ConfigError("http backend needs an endpoint");
      if (b->http.model.empty()) throw ConfigError("http backend needs a model");
    } else {
      throw ConfigError("unknown backend kind '" + b->kind + "'");
    }
  }
  try {
    check_execution_config(c.exec);
    rope::check_rope_config(c.rope);
  } catch (const PreconditionViolation& ex) {
    throw ConfigError(ex.what());
  }
}

std::unique_ptr<llm::Backend> make_backend(const BackendSettings& s) {
  if (s.kind == "scripted") return std::make_unique<llm::ScriptedBackend>(llm::load_script(s.script));
  if (s.kind == "http") return std::make_unique<llm::HttpBackend>(s.http);
  throw ConfigError("unknown backend kind '" + s.kind + "'");
}

std::string mutation_key(const Query& q) {
  if (q.reasoning_type != ReasoningType::kUnknown) return std::string(to_string(q.reasoning_type));
  return "query:" + q.id;
}

std::size_t query_at(std::size_t t, std::size_t train_size, std::uint64_t seed) {
  if (train_size == 0) throw PreconditionViolation("empty training set");
  const std::size_t epoch = t / train_size;
  std::vector<std::size_t> perm(train_size);
  for (std::size_t i = 0; i < train_size; ++i) perm[i] = i;
  std::mt19937_64 rng(derive_seed(seed, "epoch" + std::to_string(epoch)));
  for (std::size_t i = train_size; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(datasets::uniform_below(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm[t % train_size];
}

Json to_json(const EvolveSummary& s) {
  Json versions = Json::object();
  for (const auto& [role, v] : s.prompt_versions) versions[role] = v;
  return Json{{"first_iteration", s.first_iteration},
              {"last_iteration", s.last_iteration},
              {"iterations", s.iterations},
              {"library_active", s.library_active},
              {"prompt_versions", versions},
              {"mutations", s.mutations}};
}

Json to_json(const AnswerResult& r) {
  return Json{{"answer", r.answer},
              {"trajectory_id", r.trajectory_id},
              {"tokens", r.tokens},
              {"fallback", r.fallback},
              {"plan", r.trajectory.plan.shape()},
              {"status", to_string(r.trajectory.status)}};
}

Runtime::Runtime(RunConfig config) : config_(std::move(config)) {
  check_config(config_);
  owned_agent_ = make_backend(config_.agent_backend);
  owned_orchestrator_ = make_backend(config_.orchestrator_backend);
  agent_ = owned_agent_.get();
  orchestrator_ = owned_orchestrator_.get();
  init();
}

Runtime::Runtime(RunConfig config, llm::Backend& agent_backend, llm::Backend& orchestrator_backend)
    : config_(std::move(config)), agent_(&agent_backend), orchestrator_(&orchestrator_backend) {
  init();
}

void Runtime::init() {
  registry_ = AgentRegistry::standard();
  if (!config_.index_path.empty()) {
    if (!fs::exists(config_.index_path)) throw ConfigError("index not found: " + config_.index_path.string());
    index_ = retrieval::LexicalIndex::load(config_.index_path);
  }
  if (config_.library_path.empty()) config_.library_path = config_.state_dir / "library.json";
  if (config_.prompt_dir.empty()) config_.prompt_dir = config_.state_dir / "prompts";
  library_ = ExperienceLibrary::load(config_.library_path, config_.library);
  prompts_ = PromptStore::load(config_.prompt_dir, registry_, config_.prompt_char_budget);
}

orchestrator::OrchestratorEnv Runtime::orchestrator_env(const PromptSet& prompts, llm::CallSink* sink) const {
  orchestrator::OrchestratorEnv env;
  env.registry = &registry_;
  env.prompts = &prompts;
  env.index = &index_;
  env.agent_backend = agent_;
  env.orchestrator_backend = orchestrator_;
  env.sink = sink;
  env.exec = config_.exec;
  env.group_parallelism = config_.group_parallelism;
  return env;
}

EvolveSummary Runtime::evolve(const std::vector<Query>& train, std::optional<std::size_t> until) {
  if (train.empty()) throw PreconditionViolation("evolve needs a nonempty training set");
  for (const auto& q : train) {
    check_query(q);
    if (q.gold_answers.empty()) throw PreconditionViolation("training query " + q.id + " has no gold answers");
  }
  const std::size_t last = until.value_or(config_.iterations);
  const fs::path& dir = config_.state_dir;
  fs::create_directories(dir);

  std::size_t next = 1;
  std::size_t backend_failures = 0;
  const fs::path run_state_path = dir / files::kRunState;
  if (fs::exists(run_state_path)) {
    const Json rs = read_json(run_state_path);
    if (rs.at("seed").get<std::uint64_t>() != config_.seed)
      throw ConfigError("state in " + dir.string() + " was produced with a different seed");
    if (rs.at("train_size").get<std::size_t>() != train.size())
      throw ConfigError("state in " + dir.string() + " was produced with a different training set");
    next = rs.at("next_iteration").get<std::size_t>();
    backend_failures = rs.value("backend_failures", std::size_t{0});
    for (const char* name : kLogs) {
      const std::uintmax_t size = rs.at("log_sizes").value(name, std::uintmax_t{0});
      const fs::path p = dir / name;
      if (!fs::exists(p)) {
        if (size) throw ConfigError(p.string() + " is missing but the run state expects it");
        continue;
      }
      if (fs::file_size(p) < size) throw ConfigError(p.string() + " is shorter than the run state expects");
      fs::resize_file(p, size);
    }
    spdlog::info("resuming at iteration {}", next);
  } else {
    for (const char* name : kLogs) fs::remove(dir / name);
  }
  LoopState loop;
  if (fs::exists(dir / files::kRopeState)) loop = LoopState::from_json(read_json(dir / files::kRopeState));

  llm::CallLog calls(dir / files::kCalls);
  const llm::Channel orchestrator(*orchestrator_, &calls);

  EvolveSummary summary;
  summary.first_iteration = next;
  for (std::size_t t = next; t <= last; ++t) {
    const Query& query = train[query_at(t - 1, train.size(), config_.seed)];
    const std::uint64_t iter_seed = derive_seed(config_.seed, "iteration" + std::to_string(t));
    const std::string profile = orchestrator::characterize_query(query);
    const std::string key = mutation_key(query);
    const auto now = static_cast<std::int64_t>(t);
    Json record{{"iteration", t}, {"query_id", query.id}, {"profile", profile}};

    const PromptSet prompts = prompts_.snapshot();
    const auto experiences = library_.retrieve(profile, config_.library.retrieve_count);
    std::vector<std::string> used_ids;
    for (const auto& e : experiences) used_ids.push_back(e.id);
    record["experiences"] = used_ids;

    orchestrator::GroupOptions go;
    go.group_size = config_.group_size;
    go.rollout_temperature = config_.rollout_temperature;
    go.seed = iter_seed;
    go.id_prefix = "it" + std::to_string(t);
    const auto pending = loop.pending.find(key);
    const bool had_mutation = pending != loop.pending.end();
    if (had_mutation) {
      go.injected_plans.push_back(pending->second);
      loop.pending.erase(pending);
    }

    std::optional<orchestrator::GroupRun> run;
    try {
      run = orchestrator::run_group(query, experiences, orchestrator_env(prompts, &calls), go);
      backend_failures = 0;
    } catch (const BackendUnavailable& ex) {
      ++backend_failures;
      spdlog::error("iteration {}: backend unavailable: {}", t, ex.what());
      record["status"] = "backend_unavailable";
      record["error"] = ex.what();
    } catch (const Error& ex) {
      spdlog::error("iteration {}: {}", t, ex.what());
      record["status"] = "error";
      record["error"] = ex.what();
    }

    if (run) {
      const auto& group = run->group;
      record["status"] = "ok";
      Json members = Json::array();
      for (std::size_t i = 0; i < group.members.size(); ++i) {
        const auto& m = group.members[i];
        append_line(dir / files::kTrajectories, trajectory_line(m.trajectory, m.reward, t, i, "rollout", query));
        members.push_back(Json{{"trajectory_id", m.trajectory.id},
                               {"shape", m.plan.shape()},
                               {"f1", m.reward.f1},
                               {"tokens", m.reward.total_tokens},
                               {"status", to_string(m.trajectory.status)},
                               {"fallback", static_cast<bool>(run->fallback[i])},
                               {"injected", static_cast<bool>(run->injected[i])}});
      }
      record["members"] = members;
      record["ranking"] = group.ranking.order;
      record["baseline"] = group.ranking.baseline;
      record["mixed"] = group.mixed();

      InsightBundle bundle;
      Json decisions = Json::array();
      if (group.mixed()) {
        bundle = orchestrator::extract_insights(group, query, profile, orchestrator, derive_seed(iter_seed, "extract"));
        for (const auto& d : consolidate(library_, bundle, profile, orchestrator, now, derive_seed(iter_seed, "library")))
          decisions.push_back(to_json(d));
      }
      record["insights"] = bundle.insights.size();
      record["decisions"] = decisions;
      record["blamed"] = bundle.blamed_agents;

      if (!used_ids.empty())
        for (std::size_t i = 0; i < group.members.size(); ++i) library_.record_outcome(used_ids, group.succeeded(i), now);

      Json rope_events = Json::array();
      if (config_.rope_enabled) {
        for (const auto& role : bundle.blamed_agents) {
          std::optional<std::size_t> worst;
          for (std::size_t idx : group.ranking.order) {
            const auto& m = group.members[idx];
            const bool has_role = std::any_of(m.plan.steps.begin(), m.plan.steps.end(),
                                              [&](const PlanStep& s) { return s.agent == role; });
            if (has_role && !group.succeeded(idx)) worst = idx;
          }
          if (!worst) continue;
          const auto& m = group.members[*worst];
          auto [it, inserted] = loop.buffers.try_emplace(role, role, config_.rope.buffer_size);
          (void)inserted;
          rope::RopeEnv renv;
          renv.registry = &registry_;
          renv.prompts = &prompts;
          renv.index = &index_;
          renv.agent_backend = agent_;
          renv.orchestrator_backend = orchestrator_;
          renv.sink = &calls;
          renv.exec = config_.exec;
          renv.exec.temperature = config_.rollout_temperature;
          const PromptState current = prompts_.history(role).current();
          auto outcome = rope::evolve_agent(role, {query, m.trajectory, m.reward}, it->second, current, renv,
                                            config_.rope, derive_seed(iter_seed, "rope/" + role));
          outcome.audit["iteration"] = t;
          append_line(dir / files::kRopeAudit, outcome.audit);
          if (outcome.adopted) {
            prompts_.history(role).push(*outcome.adopted, now,
                                        rope::provenance(rope::delta_from_json(outcome.audit.at("delta")), config_.rope,
                                                         m.trajectory.id));
          }
          rope_events.push_back(Json{{"role", role},
                                     {"adopted", static_cast<bool>(outcome.adopted)},
                                     {"version", prompts_.history(role).current().version}});
        }
      }
      record["rope"] = rope_events;

      Json mutation = nullptr;
      if (config_.mutation_enabled) {
        const bool all_zero = std::all_of(group.members.begin(), group.members.end(),
                                          [](const auto& m) { return m.reward.f1 == 0.0; });
        if (!all_zero) {
          loop.streaks.erase(key);
        } else if (++loop.streaks[key] >= config_.mutation_streak) {
          const auto& failing = group.members[group.ranking.order.front()];
          const int blamed_step = orchestrator::choose_blamed_step(failing.trajectory);
          const auto proposal = orchestrator::propose_mutation(failing.plan.query_profile, failing.plan, blamed_step,
                                                               registry_, orchestrator, derive_seed(iter_seed, "mutation"));
          loop.pending[key] = proposal.derived_plan;
          loop.streaks.erase(key);
          ++summary.mutations;
          mutation = Json{{"key", key},
                          {"kind", orchestrator::to_string(proposal.kind)},
                          {"target_step", proposal.target_step},
                          {"agent", proposal.agent},
                          {"derived_shape", proposal.derived_plan.shape()}};
        }
      }
      record["mutation"] = mutation;
      record["injected_mutation"] = had_mutation;
    } else if (had_mutation) {
      loop.pending[key] = go.injected_plans.front();
    }

    record["library_active"] = library_.active_count();
    Json versions = Json::object();
    for (const auto& [role, h] : prompts_.histories()) versions[role] = h.current().version;
    record["prompt_versions"] = versions;
    append_line(dir / files::kIterations, record);

    library_.save(config_.library_path);
    prompts_.save(config_.prompt_dir);
    write_atomic(dir / files::kRopeState, loop.to_json().dump(2) + "\n");
    Json sizes = Json::object();
    for (const char* name : kLogs) sizes[name] = size_or_zero(dir / name);
    write_atomic(run_state_path, Json{{"next_iteration", t + 1},
                                      {"seed", config_.seed},
                                      {"train_size", train.size()},
                                      {"backend_failures", backend_failures},
                                      {"log_sizes", sizes}}
                                     .dump(2) + "\n");
    summary.iterations.push_back(record);
    summary.last_iteration = t;
    if (backend_failures > config_.max_backend_failures)
      throw BackendUnavailable("aborting after " + std::to_string(backend_failures) +
                               " consecutive iterations without a backend");
  }
  summary.library_active = library_.active_count();
  for (const auto& [role, h] : prompts_.histories()) summary.prompt_versions[role] = h.current().version;
  return summary;
}

AnswerResult Runtime::answer(const Query& query, std::uint64_t seed) {
  if (text::trim(query.text).empty()) throw PreconditionViolation("empty question");
  const PromptSet prompts = prompts_.snapshot();
  llm::CallBuffer calls;
  const llm::Channel orchestrator(*orchestrator_, &calls);
  const std::string profile = orchestrator::characterize_query(query);
  const auto experiences = library_.retrieve(profile, config_.library.retrieve_count);
  orchestrator::SampleOptions so{config_.eval_temperature, derive_seed(seed, "sample"), config_.exec.max_steps};
  const auto sampled = orchestrator::sample_plan(query, experiences, registry_, orchestrator, so);

  ExecutionConfig exec = config_.exec;
  exec.temperature = config_.eval_temperature;
  ExecutionEnv env;
  env.registry = &registry_;
  env.prompts = &prompts;
  env.index = &index_;
  env.backend = agent_;
  env.sink = &calls;
  AnswerResult r;
  r.trajectory = execute(sampled.plan, query, exec, env, "answer/" + query.id, derive_seed(seed, "exec"));
  r.answer = r.trajectory.final_answer;
  r.trajectory_id = r.trajectory.id;
  r.tokens = r.trajectory.total_tokens();
  r.fallback = sampled.fallback;
  return r;
}

EvaluationResult Runtime::evaluate(const std::string& dataset, const std::vector<Query>& queries, std::uint64_t seed) {
  EvaluationResult out;
  std::vector<Reward> rewards;
  std::size_t failures = 0;
  for (const auto& q : queries) {
    if (q.gold_answers.empty()) throw PreconditionViolation("evaluation query " + q.id + " has no gold answers");
    Json row{{"id", q.id}};
    Reward reward;
    try {
      const AnswerResult a = answer(q, derive_seed(seed, q.id));
      reward = eval::make_reward(a.trajectory, q.gold_answers);
      if (a.trajectory.status == TrajectoryStatus::kFailed) ++failures;
      row["answer"] = a.answer;
      row["status"] = to_string(a.trajectory.status);
      row["plan"] = a.trajectory.plan.shape();
    } catch (const Error& ex) {
      spdlog::warn("{}: evaluation failed: {}", q.id, ex.what());
      ++failures;
      row["answer"] = "";
      row["status"] = "error";
      row["error"] = ex.what();
    }
    row["em"] = reward.em;
    row["f1"] = reward.f1;
    row["accuracy"] = reward.accuracy;
    row["tokens"] = reward.total_tokens;
    rewards.push_back(reward);
    out.per_query.push_back(std::move(row));
  }
  out.report = eval::summarize(dataset, rewards, failures);
  return out;
}

}  // namespace evorag::runtime
