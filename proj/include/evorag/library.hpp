#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evorag/llm.hpp"
#include "evorag/model.hpp"

namespace evorag {

struct InsightItem {
  std::string query_type;
  std::string insight;
};

// Comparative analysis of one mixed group.
struct InsightBundle {
  std::vector<std::string> success_factors;
  std::vector<std::string> failure_modes;
  std::vector<InsightItem> insights;
  std::vector<std::string> blamed_agents;

  bool empty() const { return insights.empty() && blamed_agents.empty(); }
};

enum class EntryStatus { kActive, kPruned };

// Profile, insight and utility counters. Utility is successes / max(1, uses).
struct ExperienceEntry {
  std::string id;
  std::string profile;
  std::string insight;
  std::int64_t uses = 0;
  std::int64_t successes = 0;
  std::int64_t created_at = 0;
  std::int64_t last_used_at = 0;
  EntryStatus status = EntryStatus::kActive;

  double utility() const {
    return static_cast<double>(successes) / static_cast<double>(std::max<std::int64_t>(1, uses));
  }
  bool active() const { return status == EntryStatus::kActive; }
  bool operator==(const ExperienceEntry&) const = default;
};

enum class LibraryOp { kAdd, kMerge, kPrune, kKeep };
std::string_view to_string(LibraryOp op);

struct ConsolidationDecision {
  LibraryOp operation = LibraryOp::kKeep;
  std::string new_insight;
  std::vector<std::string> target_entry_ids;
  std::string merged_insight;
  std::string rationale;
  // Profile carried by any entry the decision creates.
  std::string profile;
};

Json to_json(const ConsolidationDecision& d);

struct LibraryConfig {
  std::size_t max_entries = 200;
  // Profiles match when they share a reasoning-type keyword or reach this token Jaccard.
  double profile_match_threshold = 0.3;
  // Retrieval skips insights more similar than this to one already selected.
  double diversity_threshold = 0.6;
  // No two active insights may be more similar than this after consolidation.
  double dedup_threshold = 0.9;
  std::size_t retrieve_count = 5;
};

bool profiles_match(std::string_view a, std::string_view b, double threshold);

class ExperienceLibrary {
 public:
  ExperienceLibrary() = default;
  explicit ExperienceLibrary(LibraryConfig config) : config_(config) {}

  const LibraryConfig& config() const { return config_; }
  const std::vector<ExperienceEntry>& entries() const { return entries_; }
  std::vector<const ExperienceEntry*> active() const;
  std::size_t active_count() const;
  const ExperienceEntry* find(std::string_view id) const;

  // Active entries whose profile matches.
  std::vector<const ExperienceEntry*> candidates(std::string_view profile) const;

  // Greedy utility-ordered selection with a diversity filter; at most m entries.
  std::vector<ExperienceEntry> retrieve(std::string_view query_profile, std::size_t m) const;

  // uses += 1 for each active id, successes += 1 when success. Pruned or
  // unknown ids are skipped with a warning.
  void record_outcome(const std::vector<std::string>& used_entry_ids, bool success, std::int64_t now);

  // Applies decisions in order, then folds near-duplicates and enforces the
  // size cap. Returns the decisions as actually applied.
  std::vector<ConsolidationDecision> apply(const std::vector<ConsolidationDecision>& decisions, std::int64_t now);

  // Drops pruned entries from storage.
  void compact();

  Json to_json() const;
  static ExperienceLibrary from_json(const Json& j);
  void save(const std::filesystem::path& path) const;
  // A missing file yields an empty library with the given config.
  static ExperienceLibrary load(const std::filesystem::path& path, LibraryConfig config);

 private:
  std::string next_id() const;
  ExperienceEntry* find_mut(std::string_view id);
  std::string add_entry(const std::string& profile, const std::string& insight, std::int64_t uses,
                        std::int64_t successes, std::int64_t now);
  void fold_duplicates();
  void enforce_cap();

  LibraryConfig config_;
  std::vector<ExperienceEntry> entries_;
};

// Consolidates a mixed group's insights. Insights with no candidate match are
// ADDed without a backend call; the rest are decided by one library_ops
// completion. A malformed response defaults every pending insight to ADD.
std::vector<ConsolidationDecision> consolidate(ExperienceLibrary& library, const InsightBundle& insights,
                                               const std::string& query_profile, const llm::Channel& channel,
                                               std::int64_t now, std::uint64_t seed = 0);

// Text block listing entries for prompts.
std::string format_entries(const std::vector<const ExperienceEntry*>& entries);

}  // namespace evorag
