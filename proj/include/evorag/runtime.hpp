#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evorag/evaluation.hpp"
#include "evorag/executor.hpp"
#include "evorag/library.hpp"
#include "evorag/llm.hpp"
#include "evorag/model.hpp"
#include "evorag/orchestrator.hpp"
#include "evorag/prompts.hpp"
#include "evorag/retrieval.hpp"
#include "evorag/rope.hpp"

namespace evorag::runtime {

struct BackendSettings {
  // "scripted" or "http".
  std::string kind = "scripted";
  std::filesystem::path script;
  llm::HttpConfig http;
};

struct RunConfig {
  BackendSettings agent_backend;
  BackendSettings orchestrator_backend;
  std::filesystem::path state_dir = "state";
  std::filesystem::path library_path;  // defaults to <state_dir>/library.json
  std::filesystem::path prompt_dir;    // defaults to <state_dir>/prompts
  std::filesystem::path index_path;
  std::filesystem::path train_path;
  std::uint64_t seed = 0;
  std::size_t iterations = 10;
  std::size_t group_size = 4;
  double rollout_temperature = 0.9;
  double eval_temperature = 0.0;
  std::size_t group_parallelism = 4;
  ExecutionConfig exec;
  LibraryConfig library;
  rope::RopeConfig rope;
  bool rope_enabled = true;
  bool mutation_enabled = true;
  // Consecutive all-zero groups of one profile that trigger a mutation.
  std::size_t mutation_streak = 2;
  // The run aborts after more consecutive backend-unavailable iterations than this.
  std::size_t max_backend_failures = 5;
  // Success threshold for record_outcome outside a group.
  double inference_success_f1 = 0.5;
  std::size_t prompt_char_budget = 6000;
};

// Relative paths resolve against the config file's directory. Environment
// overrides: EVORAG_ENDPOINT, EVORAG_MODEL, EVORAG_ORCHESTRATOR_MODEL and
// EVORAG_API_KEY apply to http backends.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir);
void apply_env_overrides(RunConfig& config);
void check_config(const RunConfig& config);

std::unique_ptr<llm::Backend> make_backend(const BackendSettings& settings);

// Names of the files kept under state_dir.
namespace files {
inline constexpr const char* kRunState = "run_state.json";
inline constexpr const char* kRopeState = "rope_state.json";
inline constexpr const char* kTrajectories = "trajectories.jsonl";
inline constexpr const char* kIterations = "iterations.jsonl";
inline constexpr const char* kCalls = "llm_calls.jsonl";
inline constexpr const char* kRopeAudit = "rope_audit.jsonl";
}  // namespace files

// Profile key for the mutation streak: the reasoning type when known,
// otherwise the query id.
std::string mutation_key(const Query& q);

// Position `t` (0-based) of the training order; each epoch is a seeded permutation.
std::size_t query_at(std::size_t t, std::size_t train_size, std::uint64_t seed);

struct EvolveSummary {
  std::size_t first_iteration = 0;  // 1-based, inclusive
  std::size_t last_iteration = 0;
  std::vector<Json> iterations;
  std::size_t library_active = 0;
  std::map<std::string, int> prompt_versions;
  std::size_t mutations = 0;
};

Json to_json(const EvolveSummary& s);

struct AnswerResult {
  std::string answer;
  std::string trajectory_id;
  std::int64_t tokens = 0;
  bool fallback = false;
  Trajectory trajectory;
};

Json to_json(const AnswerResult& r);

struct EvaluationResult {
  eval::DatasetReport report;
  std::vector<Json> per_query;
};

class Runtime {
 public:
  // Builds backends, loads the index, library and prompt store. Throws
  // ConfigError on an unloadable prompt store or library.
  explicit Runtime(RunConfig config);
  // For tests: caller-owned backends.
  Runtime(RunConfig config, llm::Backend& agent_backend, llm::Backend& orchestrator_backend);

  const RunConfig& config() const { return config_; }
  const ExperienceLibrary& library() const { return library_; }
  const PromptStore& prompts() const { return prompts_; }
  const AgentRegistry& registry() const { return registry_; }

  // Runs iterations from the persisted next iteration up to `until` (or
  // config.iterations), persisting all state after each.
  EvolveSummary evolve(const std::vector<Query>& train, std::optional<std::size_t> until = std::nullopt);

  // One plan at eval temperature, executed once; writes nothing.
  AnswerResult answer(const Query& query, std::uint64_t seed);

  EvaluationResult evaluate(const std::string& dataset, const std::vector<Query>& queries, std::uint64_t seed);

 private:
  void init();
  orchestrator::OrchestratorEnv orchestrator_env(const PromptSet& prompts, llm::CallSink* sink) const;

  RunConfig config_;
  std::unique_ptr<llm::Backend> owned_agent_;
  std::unique_ptr<llm::Backend> owned_orchestrator_;
  llm::Backend* agent_ = nullptr;
  llm::Backend* orchestrator_ = nullptr;
  AgentRegistry registry_;
  retrieval::LexicalIndex index_;
  ExperienceLibrary library_;
  PromptStore prompts_;
};

}  // namespace evorag::runtime
