#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evorag {

using Json = nlohmann::json;

enum class ReasoningType { kBridge, kIntersection, kComparison, kTemporal, kCausal, kAmbiguous, kUnknown };
enum class Complexity { kEasy, kMedium, kHard, kUnknown };
enum class StepMode { kSequential, kParallel };
enum class TrajectoryStatus { kCompleted, kFailed };

std::string_view to_string(ReasoningType t);
std::string_view to_string(Complexity c);
std::string_view to_string(StepMode m);
std::string_view to_string(TrajectoryStatus s);

// Lenient parsers: case-insensitive, return nullopt on anything unrecognised.
std::optional<ReasoningType> parse_reasoning_type(std::string_view s);
std::optional<Complexity> parse_complexity(std::string_view s);
std::optional<StepMode> parse_step_mode(std::string_view s);

struct Query {
  std::string id;
  std::string text;
  std::vector<std::string> gold_answers;
  ReasoningType reasoning_type = ReasoningType::kUnknown;
  Complexity complexity = Complexity::kUnknown;
};

// Throws PreconditionViolation when text is empty or a gold answer is empty.
void check_query(const Query& q);

namespace roles {
inline constexpr std::string_view kQueryDecomposer = "QueryDecomposer";
inline constexpr std::string_view kRetriever = "Retriever";
inline constexpr std::string_view kAnswerGenerator = "AnswerGenerator";
inline constexpr std::string_view kQueryRewriter = "QueryRewriter";
inline constexpr std::string_view kEvidenceSelector = "EvidenceSelector";
inline constexpr std::string_view kContextValidator = "ContextValidator";
inline constexpr std::string_view kReflectAgent = "ReflectAgent";
inline constexpr std::string_view kConcludeAgent = "ConcludeAgent";
}  // namespace roles

inline constexpr std::string_view kSearchTool = "search";

struct AgentRole {
  std::string name;
  std::string description;
  std::vector<std::string> tools;
};

// Name-unique set of agent roles.
class AgentRegistry {
 public:
  AgentRegistry() = default;
  explicit AgentRegistry(std::vector<AgentRole> roles);

  // The eight standard RAG roles; only Retriever carries the search tool.
  static AgentRegistry standard();

  const AgentRole* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const std::vector<AgentRole>& roles() const { return roles_; }
  bool empty() const { return roles_.empty(); }

 private:
  std::vector<AgentRole> roles_;
};

struct PlanStep {
  int step_index = 0;
  std::string agent;
  std::vector<int> depends_on;
  StepMode mode = StepMode::kSequential;

  bool operator==(const PlanStep&) const = default;
};

struct ExecutionPlan {
  std::string query_profile;
  std::vector<PlanStep> steps;

  bool operator==(const ExecutionPlan&) const = default;

  // Index (0-based) of the single step nothing depends on, if exactly one exists.
  std::optional<std::size_t> terminal() const;
  // Agent sequence in step order; used as the plan's "shape".
  std::string shape() const;
};

struct PlanViolation {
  int step_index = 0;  // 0 for plan-level violations
  std::string rule;
};

struct PlanValidation {
  std::vector<PlanViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

PlanValidation validate_plan(const ExecutionPlan& plan, const AgentRegistry& registry);

struct ToolCall {
  std::string tool;
  std::string arguments;
  std::string result_digest;
};

struct StepRecord {
  int step_index = 0;
  std::string agent;
  std::string input_text;
  std::string output_text;
  std::vector<ToolCall> tool_calls;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::int64_t wall_ms = 0;
};

struct StepError {
  int step_index = 0;
  std::string kind;
  std::string message;
};

struct Trajectory {
  std::string id;
  std::string query_id;
  ExecutionPlan plan;
  std::vector<StepRecord> records;
  std::string final_answer;
  TrajectoryStatus status = TrajectoryStatus::kCompleted;
  std::optional<StepError> error;

  std::int64_t total_tokens() const;
};

struct Reward {
  double f1 = 0.0;
  int em = 0;
  int accuracy = 0;
  std::int64_t total_tokens = 0;
};

// Terminal-step answer: the remainder of the last line starting with
// "Answer:", or the whole trimmed output when no such line exists.
std::string extract_answer(std::string_view output);

void to_json(Json& j, const Query& q);
void from_json(const Json& j, Query& q);
void to_json(Json& j, const PlanStep& s);
void from_json(const Json& j, PlanStep& s);
void to_json(Json& j, const ExecutionPlan& p);
void from_json(const Json& j, ExecutionPlan& p);
void to_json(Json& j, const ToolCall& c);
void from_json(const Json& j, ToolCall& c);
void to_json(Json& j, const StepRecord& r);
void from_json(const Json& j, StepRecord& r);
void to_json(Json& j, const Trajectory& t);
void from_json(const Json& j, Trajectory& t);
void to_json(Json& j, const Reward& r);
void from_json(const Json& j, Reward& r);

}  // namespace evorag
