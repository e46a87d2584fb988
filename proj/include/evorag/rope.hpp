#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "evorag/executor.hpp"
#include "evorag/llm.hpp"
#include "evorag/model.hpp"
#include "evorag/prompts.hpp"

namespace evorag::rope {

enum class Axis { kThoroughness, kRiskSensitivity, kErrorCorrection, kHeuristicInjection, kEfficiency };

std::string_view to_string(Axis a);
std::optional<Axis> parse_axis(std::string_view s);
std::vector<Axis> all_axes();
std::string_view axis_guidance(Axis a);

struct RopeConfig {
  std::size_t max_rules = 8;       // K
  std::size_t max_principles = 5;  // K_bp
  std::size_t buffer_size = 10;    // B
  double dedup_threshold = 0.8;
  std::vector<Axis> axes = all_axes();
  double variant_temperature = 0.7;
  // Buffer entries shown to the variant generator.
  std::size_t digest_count = 3;
};

void check_rope_config(const RopeConfig& config);

// A trajectory in which the role was blamed, with what is needed to replay it.
struct FailureEntry {
  Query query;
  Trajectory trajectory;
  Reward reward;
};

// Newest-first ring of the last `capacity` failures for one role.
class FailureBuffer {
 public:
  FailureBuffer() = default;
  FailureBuffer(std::string role, std::size_t capacity) : role_(std::move(role)), capacity_(capacity) {}

  void push(FailureEntry entry);
  const std::string& role() const { return role_; }
  std::size_t capacity() const { return capacity_; }
  const std::deque<FailureEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  Json to_json() const;
  static FailureBuffer from_json(const Json& j);

 private:
  std::string role_;
  std::size_t capacity_ = 10;
  std::deque<FailureEntry> entries_;
};

struct VariantResult {
  Trajectory trajectory;
  Reward reward;
  bool failed = false;
};

struct PromptVariant {
  Axis axis = Axis::kThoroughness;
  std::string text;
  std::optional<VariantResult> result;
};

struct DeltaItem {
  std::string text;
  std::string derived_from;
  bool operator==(const DeltaItem&) const = default;
};

struct PromptDelta {
  std::vector<DeltaItem> operational_rules;
  std::vector<DeltaItem> behavioral_principles;

  bool empty() const { return operational_rules.empty() && behavioral_principles.empty(); }
};

Json to_json(const PromptDelta& d);
PromptDelta delta_from_json(const Json& j);

// Failure digests for the variant prompt: the role's step outputs and the reward.
std::string format_failures(const FailureBuffer& buffer, std::size_t limit);

// One variant per configured axis. A variant must contain core_text verbatim
// and fit the budget; a failing one is regenerated once, then dropped.
std::vector<PromptVariant> generate_variants(const std::string& role, const PromptState& state,
                                             const FailureBuffer& buffer, const llm::Channel& channel,
                                             const RopeConfig& config, std::uint64_t seed);

// Replays the whole plan with `role`'s system text swapped for every step the
// role executes; other roles keep the prompts in `env`.
VariantResult reexecute_with_variant(const FailureEntry& original, const std::string& role,
                                     const std::string& variant_text, const ExecutionConfig& exec,
                                     const ExecutionEnv& env, const std::string& trajectory_id, std::uint64_t seed);

struct Analysis {
  PromptDelta delta;
  std::string updated_prompt;
  bool called = false;
};

// Contrastive extraction over variant results. No backend call when fewer
// than two results exist or all rewards are equal.
Analysis contrastive_analysis(const AgentRole& role, const PromptState& state,
                              const std::vector<PromptVariant>& variants, const llm::Channel& channel,
                              const RopeConfig& config, std::uint64_t seed);

// Appends, deduplicates and evicts oldest-first until every cap and the
// budget hold. Returns nullopt when no new item survives.
std::optional<PromptState> consolidate(const PromptState& state, const PromptDelta& delta, const RopeConfig& config);

// Provenance recorded with each adopted version; enough to replay it.
Json provenance(const PromptDelta& delta, const RopeConfig& config, const std::string& trigger);

// Rebuilds the current state by applying every recorded delta to version 1.
PromptState replay_history(const PromptHistory& history);

struct RopeEnv {
  const AgentRegistry* registry = nullptr;
  const PromptSet* prompts = nullptr;
  const retrieval::LexicalIndex* index = nullptr;
  llm::Backend* agent_backend = nullptr;
  // Generates variants and runs the analysis.
  llm::Backend* orchestrator_backend = nullptr;
  llm::CallSink* sink = nullptr;
  ExecutionConfig exec;
};

struct EvolveOutcome {
  std::optional<PromptState> adopted;
  Json audit;
};

// Buffer push, variants, replays, analysis, consolidation and the adoption
// gate (best variant f1 must beat the original). Soft failures yield no change.
EvolveOutcome evolve_agent(const std::string& role, const FailureEntry& blamed, FailureBuffer& buffer,
                           const PromptState& current, const RopeEnv& env, const RopeConfig& config,
                           std::uint64_t seed);

}  // namespace evorag::rope
