#include "evorag/model.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag {

namespace {

constexpr std::array<std::pair<ReasoningType, std::string_view>, 7> kReasoningNames{{
    {ReasoningType::kBridge, "bridge"},
    {ReasoningType::kIntersection, "intersection"},
    {ReasoningType::kComparison, "comparison"},
    {ReasoningType::kTemporal, "temporal"},
    {ReasoningType::kCausal, "causal"},
    {ReasoningType::kAmbiguous, "ambiguous"},
    {ReasoningType::kUnknown, "unknown"},
}};

constexpr std::array<std::pair<Complexity, std::string_view>, 4> kComplexityNames{{
    {Complexity::kEasy, "easy"},
    {Complexity::kMedium, "medium"},
    {Complexity::kHard, "hard"},
    {Complexity::kUnknown, "unknown"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  return "unknown";
}

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  const std::string lowered = text::to_lower(text::trim(s));
  for (const auto& [e, name] : table)
    if (lowered == name) return e;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ReasoningType t) { return name_of(kReasoningNames, t); }
std::string_view to_string(Complexity c) { return name_of(kComplexityNames, c); }
std::string_view to_string(StepMode m) { return m == StepMode::kParallel ? "parallel" : "sequential"; }
std::string_view to_string(TrajectoryStatus s) { return s == TrajectoryStatus::kCompleted ? "completed" : "failed"; }

std::optional<ReasoningType> parse_reasoning_type(std::string_view s) { return lookup(kReasoningNames, s); }
std::optional<Complexity> parse_complexity(std::string_view s) { return lookup(kComplexityNames, s); }

std::optional<StepMode> parse_step_mode(std::string_view s) {
  const std::string lowered = text::to_lower(text::trim(s));
  if (lowered == "sequential") return StepMode::kSequential;
  if (lowered == "parallel") return StepMode::kParallel;
  return std::nullopt;
}

void check_query(const Query& q) {
  if (text::trim(q.text).empty()) throw PreconditionViolation("query " + q.id + " has empty text");
  for (const auto& g : q.gold_answers)
    if (g.empty()) throw PreconditionViolation("query " + q.id + " has an empty gold answer");
}

AgentRegistry::AgentRegistry(std::vector<AgentRole> roles) : roles_(std::move(roles)) {
  std::set<std::string> seen;
  for (const auto& r : roles_) {
    if (!seen.insert(r.name).second) throw PreconditionViolation("duplicate agent role " + r.name);
  }
}

AgentRegistry AgentRegistry::standard() {
  const std::string search(kSearchTool);
  return AgentRegistry({
      {std::string(roles::kQueryDecomposer), "Breaks a complex question into simpler sub-questions.", {}},
      {std::string(roles::kRetriever), "Searches the corpus and summarizes the evidence it finds.", {search}},
      {std::string(roles::kAnswerGenerator), "Produces a concise answer from the available context.", {}},
      {std::string(roles::kQueryRewriter), "Rewrites a question or sub-question into a better search query.", {}},
      {std::string(roles::kEvidenceSelector), "Selects the passages and facts relevant to the question.", {}},
      {std::string(roles::kContextValidator), "Checks whether the gathered context is sufficient and consistent.", {}},
      {std::string(roles::kReflectAgent), "Critiques intermediate reasoning and points out gaps or errors.", {}},
      {std::string(roles::kConcludeAgent), "Combines upstream findings into a final answer.", {}},
  });
}

const AgentRole* AgentRegistry::find(std::string_view name) const {
  for (const auto& r : roles_)
    if (r.name == name) return &r;
  return nullptr;
}

std::optional<std::size_t> ExecutionPlan::terminal() const {
  std::set<int> depended;
  for (const auto& s : steps)
    for (int d : s.depends_on) depended.insert(d);
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (depended.count(steps[i].step_index)) continue;
    if (found) return std::nullopt;
    found = i;
  }
  return found;
}

std::string ExecutionPlan::shape() const {
  std::string out;
  for (const auto& s : steps) {
    if (!out.empty()) out += s.mode == StepMode::kParallel ? "|" : ">";
    out += s.agent;
  }
  return out;
}

std::string PlanValidation::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].rule;
  }
  return os.str();
}

PlanValidation validate_plan(const ExecutionPlan& plan, const AgentRegistry& registry) {
  PlanValidation v;
  auto add = [&v](int step, std::string rule) { v.violations.push_back({step, std::move(rule)}); };

  if (plan.steps.empty()) {
    add(0, "plan has no steps");
    return v;
  }
  bool indices_ok = true;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& s = plan.steps[i];
    const int expected = static_cast<int>(i) + 1;
    const int idx = s.step_index;
    if (idx != expected) {
      indices_ok = false;
      add(idx, "step index " + std::to_string(idx) + " out of sequence (expected " + std::to_string(expected) + ")");
    }
    if (!registry.contains(s.agent)) add(idx, "unknown agent '" + s.agent + "' at step " + std::to_string(idx));
    std::set<int> seen;
    for (int d : s.depends_on) {
      if (!seen.insert(d).second) {
        add(idx, "duplicate dependency on step " + std::to_string(d) + " at step " + std::to_string(idx));
      } else if (d == idx) {
        add(idx, "self-dependency at step " + std::to_string(idx));
      } else if (d > idx) {
        add(idx, "forward dependency on step " + std::to_string(d) + " at step " + std::to_string(idx));
      } else if (d < 1) {
        add(idx, "dependency on nonexistent step " + std::to_string(d) + " at step " + std::to_string(idx));
      }
    }
  }
  if (indices_ok && v.ok()) {
    std::set<int> depended;
    for (const auto& s : plan.steps)
      for (int d : s.depends_on) depended.insert(d);
    std::vector<std::string> sinks;
    for (const auto& s : plan.steps)
      if (!depended.count(s.step_index)) sinks.push_back(std::to_string(s.step_index));
    if (sinks.size() != 1) add(0, "expected exactly one terminal step, found steps [" + text::join(sinks, ",") + "]");
  }
  return v;
}

std::int64_t Trajectory::total_tokens() const {
  std::int64_t sum = 0;
  for (const auto& r : records) sum += r.tokens_in + r.tokens_out;
  return sum;
}

std::string extract_answer(std::string_view output) {
  std::optional<std::string> answer;
  std::size_t start = 0;
  while (start <= output.size()) {
    std::size_t end = output.find('\n', start);
    if (end == std::string_view::npos) end = output.size();
    const std::string line = text::trim(output.substr(start, end - start));
    if (text::starts_with_ci(line, "Answer:")) answer = text::trim(std::string_view(line).substr(7));
    start = end + 1;
  }
  return answer ? *answer : text::trim(output);
}

void to_json(Json& j, const Query& q) {
  j = Json{{"id", q.id},
           {"text", q.text},
           {"gold_answers", q.gold_answers},
           {"reasoning_type", to_string(q.reasoning_type)},
           {"complexity", to_string(q.complexity)}};
}

void from_json(const Json& j, Query& q) {
  q.id = j.at("id").get<std::string>();
  q.text = j.at("text").get<std::string>();
  q.gold_answers = j.value("gold_answers", std::vector<std::string>{});
  q.reasoning_type = parse_reasoning_type(j.value("reasoning_type", "unknown")).value_or(ReasoningType::kUnknown);
  q.complexity = parse_complexity(j.value("complexity", "unknown")).value_or(Complexity::kUnknown);
}

void to_json(Json& j, const PlanStep& s) {
  j = Json{{"step_index", s.step_index}, {"agent", s.agent}, {"depends_on", s.depends_on}, {"mode", to_string(s.mode)}};
}

void from_json(const Json& j, PlanStep& s) {
  s.step_index = j.at("step_index").get<int>();
  s.agent = j.at("agent").get<std::string>();
  s.depends_on = j.at("depends_on").get<std::vector<int>>();
  s.mode = parse_step_mode(j.at("mode").get<std::string>()).value_or(StepMode::kSequential);
}

void to_json(Json& j, const ExecutionPlan& p) { j = Json{{"query_profile", p.query_profile}, {"steps", p.steps}}; }

void from_json(const Json& j, ExecutionPlan& p) {
  p.query_profile = j.at("query_profile").get<std::string>();
  p.steps = j.at("steps").get<std::vector<PlanStep>>();
}

void to_json(Json& j, const ToolCall& c) {
  j = Json{{"tool", c.tool}, {"arguments", c.arguments}, {"result_digest", c.result_digest}};
}

void from_json(const Json& j, ToolCall& c) {
  c.tool = j.at("tool").get<std::string>();
  c.arguments = j.at("arguments").get<std::string>();
  c.result_digest = j.at("result_digest").get<std::string>();
}

void to_json(Json& j, const StepRecord& r) {
  j = Json{{"step_index", r.step_index}, {"agent", r.agent},         {"input_text", r.input_text},
           {"output_text", r.output_text}, {"tool_calls", r.tool_calls}, {"tokens_in", r.tokens_in},
           {"tokens_out", r.tokens_out},   {"wall_ms", r.wall_ms}};
}

void from_json(const Json& j, StepRecord& r) {
  r.step_index = j.at("step_index").get<int>();
  r.agent = j.at("agent").get<std::string>();
  r.input_text = j.at("input_text").get<std::string>();
  r.output_text = j.at("output_text").get<std::string>();
  r.tool_calls = j.at("tool_calls").get<std::vector<ToolCall>>();
  r.tokens_in = j.at("tokens_in").get<std::int64_t>();
  r.tokens_out = j.at("tokens_out").get<std::int64_t>();
  r.wall_ms = j.at("wall_ms").get<std::int64_t>();
}

void to_json(Json& j, const Trajectory& t) {
  j = Json{{"id", t.id},
           {"query_id", t.query_id},
           {"plan", t.plan},
           {"records", t.records},
           {"final_answer", t.final_answer},
           {"status", to_string(t.status)}};
  if (t.error) {
    j["error"] = Json{{"step_index", t.error->step_index}, {"kind", t.error->kind}, {"message", t.error->message}};
  }
}

void from_json(const Json& j, Trajectory& t) {
  t.id = j.value("id", "");
  t.query_id = j.at("query_id").get<std::string>();
  t.plan = j.at("plan").get<ExecutionPlan>();
  t.records = j.at("records").get<std::vector<StepRecord>>();
  t.final_answer = j.at("final_answer").get<std::string>();
  t.status = j.at("status").get<std::string>() == "completed" ? TrajectoryStatus::kCompleted : TrajectoryStatus::kFailed;
  t.error.reset();
  if (j.contains("error")) {
    const auto& e = j.at("error");
    t.error = StepError{e.at("step_index").get<int>(), e.at("kind").get<std::string>(), e.at("message").get<std::string>()};
  }
}

void to_json(Json& j, const Reward& r) {
  j = Json{{"f1", r.f1}, {"em", r.em}, {"accuracy", r.accuracy}, {"total_tokens", r.total_tokens}};
}

void from_json(const Json& j, Reward& r) {
  r.f1 = j.at("f1").get<double>();
  r.em = j.at("em").get<int>();
  r.accuracy = j.at("accuracy").get<int>();
  r.total_tokens = j.at("total_tokens").get<std::int64_t>();
}

}  // namespace evorag
