#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evorag/model.hpp"

namespace evorag {

// A role prompt split into its immutable core and the evolvable rule and
// principle lists.
struct PromptState {
  std::string role;
  std::string core_text;
  std::vector<std::string> operational_rules;
  std::vector<std::string> behavioral_principles;
  int version = 1;
  std::size_t char_budget = 6000;

  bool operator==(const PromptState&) const = default;
};

inline constexpr std::string_view kPrinciplesHeader = "Behavioral principles:";
inline constexpr std::string_view kRulesHeader = "Operational rules:";

// core_text, then the principles block, then the rules block. Empty blocks
// are omitted entirely.
std::string render_prompt(const PromptState& state);

struct ParsedPrompt {
  std::string core_text;
  std::vector<std::string> operational_rules;
  std::vector<std::string> behavioral_principles;
};

// Inverse of render_prompt for states whose items are single-line.
ParsedPrompt parse_rendered_prompt(std::string_view rendered);

// Default v1 core text for one of the standard roles.
std::string default_core_text(std::string_view role);

struct PromptVersion {
  PromptState state;
  std::int64_t created_at = 0;  // logical clock (learning iteration)
  Json provenance;
};

// Version history of one role's prompt.
class PromptHistory {
 public:
  PromptHistory() = default;
  explicit PromptHistory(PromptState initial, Json provenance = Json{{"kind", "baseline"}});

  const PromptState& current() const { return versions_.back().state; }
  const std::vector<PromptVersion>& versions() const { return versions_; }
  // Appends `next`; its version must exceed the current one and core_text must match.
  void push(PromptState next, std::int64_t created_at, Json provenance);

  Json to_json() const;
  static PromptHistory from_json(const Json& j);

 private:
  std::vector<PromptVersion> versions_;
};

using PromptSet = std::map<std::string, PromptState>;

// One JSON file per role under a directory.
class PromptStore {
 public:
  PromptStore() = default;

  // Baseline v1 prompts for every role in the registry.
  static PromptStore defaults(const AgentRegistry& registry, std::size_t char_budget = 6000);
  // Loads every role file that exists and fills missing roles with defaults.
  // Throws ConfigError naming the path on an unreadable or malformed file.
  static PromptStore load(const std::filesystem::path& dir, const AgentRegistry& registry,
                          std::size_t char_budget = 6000);
  void save(const std::filesystem::path& dir) const;

  PromptSet snapshot() const;
  const PromptHistory& history(const std::string& role) const;
  PromptHistory& history(const std::string& role);
  bool contains(const std::string& role) const { return histories_.count(role) > 0; }
  const std::map<std::string, PromptHistory>& histories() const { return histories_; }

 private:
  std::map<std::string, PromptHistory> histories_;
};

}  // namespace evorag
