#include "evorag/library.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/resources.hpp"
#include "evorag/text.hpp"

namespace evorag {

std::string_view to_string(LibraryOp op) {
  switch (op) {
    case LibraryOp::kAdd: return "ADD";
    case LibraryOp::kMerge: return "MERGE";
    case LibraryOp::kPrune: return "PRUNE";
    case LibraryOp::kKeep: return "KEEP";
  }
  return "KEEP";
}

Json to_json(const ConsolidationDecision& d) {
  return Json{{"operation", to_string(d.operation)},
              {"new_insight", d.new_insight},
              {"target_entry_ids", d.target_entry_ids},
              {"merged_insight", d.operation == LibraryOp::kMerge ? Json(d.merged_insight) : Json()},
              {"rationale", d.rationale},
              {"profile", d.profile}};
}

bool profiles_match(std::string_view a, std::string_view b, double threshold) {
  static constexpr std::array<std::string_view, 6> kKeywords{"bridge",   "intersection", "comparison",
                                                             "temporal", "causal",       "ambiguous"};
  const auto ta = text::token_set(a);
  const auto tb = text::token_set(b);
  for (auto kw : kKeywords) {
    const std::string k(kw);
    if (ta.count(k) && tb.count(k)) return true;
  }
  return text::jaccard(ta, tb) >= threshold;
}

std::vector<const ExperienceEntry*> ExperienceLibrary::active() const {
  std::vector<const ExperienceEntry*> out;
  for (const auto& e : entries_)
    if (e.active()) out.push_back(&e);
  return out;
}

std::size_t ExperienceLibrary::active_count() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.active(); }));
}

const ExperienceEntry* ExperienceLibrary::find(std::string_view id) const {
  for (const auto& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

ExperienceEntry* ExperienceLibrary::find_mut(std::string_view id) {
  for (auto& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

std::vector<const ExperienceEntry*> ExperienceLibrary::candidates(std::string_view profile) const {
  std::vector<const ExperienceEntry*> out;
  for (const auto& e : entries_)
    if (e.active() && profiles_match(e.profile, profile, config_.profile_match_threshold)) out.push_back(&e);
  return out;
}

std::vector<ExperienceEntry> ExperienceLibrary::retrieve(std::string_view query_profile, std::size_t m) const {
  if (m < 1) throw PreconditionViolation("retrieve requires m >= 1");
  auto pool = candidates(query_profile);
  std::sort(pool.begin(), pool.end(), [](const ExperienceEntry* a, const ExperienceEntry* b) {
    // Exact comparison of the rational successes/uses avoids float ties.
    const auto ua = a->successes * std::max<std::int64_t>(1, b->uses);
    const auto ub = b->successes * std::max<std::int64_t>(1, a->uses);
    if (ua != ub) return ua > ub;
    if (a->uses != b->uses) return a->uses < b->uses;
    const auto ra = std::max(a->created_at, a->last_used_at);
    const auto rb = std::max(b->created_at, b->last_used_at);
    if (ra != rb) return ra > rb;
    return a->id < b->id;
  });
  std::vector<ExperienceEntry> selected;
  std::vector<std::set<std::string>> selected_tokens;
  for (const ExperienceEntry* e : pool) {
    if (selected.size() >= m) break;
    const auto toks = text::token_set(e->insight);
    bool redundant = false;
    for (const auto& s : selected_tokens) redundant = redundant || text::jaccard(toks, s) > config_.diversity_threshold;
    if (redundant) continue;
    selected.push_back(*e);
    selected_tokens.push_back(toks);
  }
  return selected;
}

void ExperienceLibrary::record_outcome(const std::vector<std::string>& used_entry_ids, bool success, std::int64_t now) {
  std::set<std::string> seen;
  for (const auto& id : used_entry_ids) {
    if (!seen.insert(id).second) continue;
    ExperienceEntry* e = find_mut(id);
    if (e == nullptr || !e->active()) {
      spdlog::warn("record_outcome: entry {} is not active, ignored", id);
      continue;
    }
    e->uses += 1;
    if (success) e->successes += 1;
    e->last_used_at = now;
  }
}

std::string ExperienceLibrary::next_id() const {
  long max_num = 0;
  for (const auto& e : entries_) {
    if (e.id.size() > 1 && e.id[0] == 'e') {
      try {
        max_num = std::max(max_num, std::stol(e.id.substr(1)));
      } catch (const std::exception&) {
      }
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "e%05ld", max_num + 1);
  return buf;
}

std::string ExperienceLibrary::add_entry(const std::string& profile, const std::string& insight, std::int64_t uses,
                                         std::int64_t successes, std::int64_t now) {
  ExperienceEntry e;
  e.id = next_id();
  e.profile = profile;
  e.insight = insight;
  e.uses = uses;
  e.successes = successes;
  e.created_at = now;
  e.last_used_at = now;
  entries_.push_back(e);
  return e.id;
}

void ExperienceLibrary::fold_duplicates() {
  std::vector<ExperienceEntry*> act;
  std::vector<std::set<std::string>> toks;
  for (auto& e : entries_) {
    if (!e.active()) continue;
    act.push_back(&e);
    toks.push_back(text::token_set(e.insight));
  }
  // entries_ is in creation order, so the earlier entry of a pair is older
  // and absorbs the newer one.
  for (std::size_t j = 0; j < act.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (!act[i]->active() || text::jaccard(toks[i], toks[j]) <= config_.dedup_threshold) continue;
      act[i]->uses += act[j]->uses;
      act[i]->successes += act[j]->successes;
      act[i]->last_used_at = std::max(act[i]->last_used_at, act[j]->last_used_at);
      act[j]->status = EntryStatus::kPruned;
      break;
    }
  }
}

void ExperienceLibrary::enforce_cap() {
  while (active_count() > config_.max_entries) {
    ExperienceEntry* victim = nullptr;
    for (auto& e : entries_) {
      if (!e.active()) continue;
      if (victim == nullptr) {
        victim = &e;
        continue;
      }
      const auto lhs = e.successes * std::max<std::int64_t>(1, victim->uses);
      const auto rhs = victim->successes * std::max<std::int64_t>(1, e.uses);
      if (lhs < rhs || (lhs == rhs && e.created_at < victim->created_at)) victim = &e;
    }
    spdlog::info("library over capacity, pruning {}", victim->id);
    victim->status = EntryStatus::kPruned;
  }
}

std::vector<ConsolidationDecision> ExperienceLibrary::apply(const std::vector<ConsolidationDecision>& decisions,
                                                            std::int64_t now) {
  ExperienceLibrary next = *this;
  std::vector<ConsolidationDecision> applied;
  for (ConsolidationDecision d : decisions) {
    std::vector<std::string> live;
    for (const auto& id : d.target_entry_ids) {
      const ExperienceEntry* e = next.find(id);
      if (e && e->active() && std::find(live.begin(), live.end(), id) == live.end()) live.push_back(id);
    }
    d.target_entry_ids = live;
    if ((d.operation == LibraryOp::kMerge || d.operation == LibraryOp::kPrune) && live.empty()) {
      d.operation = LibraryOp::kAdd;
      d.merged_insight.clear();
    }
    if (d.operation == LibraryOp::kMerge && text::trim(d.merged_insight).empty()) d.operation = LibraryOp::kAdd;
    const std::string insight = text::collapse_whitespace(d.new_insight);
    const std::string& profile = d.profile;

    switch (d.operation) {
      case LibraryOp::kAdd:
        if (!insight.empty()) next.add_entry(profile, insight, 0, 0, now);
        break;
      case LibraryOp::kMerge: {
        std::int64_t uses = 0, successes = 0;
        for (const auto& id : live) {
          ExperienceEntry* src = next.find_mut(id);
          uses += src->uses;
          successes += src->successes;
          src->status = EntryStatus::kPruned;
        }
        next.add_entry(profile, text::collapse_whitespace(d.merged_insight), uses, successes, now);
        break;
      }
      case LibraryOp::kPrune:
        for (const auto& id : live) next.find_mut(id)->status = EntryStatus::kPruned;
        if (!insight.empty()) next.add_entry(profile, insight, 0, 0, now);
        break;
      case LibraryOp::kKeep:
        break;
    }
    applied.push_back(std::move(d));
  }
  next.fold_duplicates();
  next.enforce_cap();
  *this = std::move(next);
  return applied;
}

void ExperienceLibrary::compact() {
  std::erase_if(entries_, [](const ExperienceEntry& e) { return !e.active(); });
}

Json ExperienceLibrary::to_json() const {
  Json entries = Json::array();
  for (const auto& e : entries_) {
    entries.push_back(Json{{"id", e.id},
                           {"profile", e.profile},
                           {"insight", e.insight},
                           {"uses", e.uses},
                           {"successes", e.successes},
                           {"created_at", e.created_at},
                           {"last_used_at", e.last_used_at},
                           {"status", e.active() ? "active" : "pruned"}});
  }
  return Json{{"version", 1}, {"max_entries", config_.max_entries}, {"entries", std::move(entries)}};
}

ExperienceLibrary ExperienceLibrary::from_json(const Json& j) {
  if (j.at("version").get<int>() != 1) throw ConfigError("unsupported library version");
  ExperienceLibrary lib;
  lib.config_.max_entries = j.at("max_entries").get<std::size_t>();
  for (const auto& e : j.at("entries")) {
    ExperienceEntry x;
    x.id = e.at("id").get<std::string>();
    x.profile = e.at("profile").get<std::string>();
    x.insight = e.at("insight").get<std::string>();
    x.uses = e.at("uses").get<std::int64_t>();
    x.successes = e.at("successes").get<std::int64_t>();
    x.created_at = e.at("created_at").get<std::int64_t>();
    x.last_used_at = e.at("last_used_at").get<std::int64_t>();
    x.status = e.at("status").get<std::string>() == "active" ? EntryStatus::kActive : EntryStatus::kPruned;
    if (x.successes > x.uses || x.successes < 0) throw ConfigError("entry " + x.id + " has successes > uses");
    lib.entries_.push_back(std::move(x));
  }
  return lib;
}

void ExperienceLibrary::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << to_json().dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

ExperienceLibrary ExperienceLibrary::load(const std::filesystem::path& path, LibraryConfig config) {
  if (!std::filesystem::exists(path)) return ExperienceLibrary(config);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read library " + path.string());
  ExperienceLibrary lib;
  try {
    lib = from_json(Json::parse(in));
  } catch (const Json::exception& ex) {
    throw ConfigError("malformed library " + path.string() + ": " + ex.what());
  }
  const std::size_t stored_max = lib.config_.max_entries;
  lib.config_ = config;
  lib.config_.max_entries = stored_max;
  return lib;
}

std::string format_entries(const std::vector<const ExperienceEntry*>& entries) {
  if (entries.empty()) return "(none)";
  std::ostringstream os;
  os.precision(2);
  os << std::fixed;
  for (const ExperienceEntry* e : entries) {
    os << "- [" << e->id << "] Query Type: " << e->profile << " | Insight: " << e->insight
       << " | Utility score: " << e->utility() << " (" << e->successes << "/" << e->uses << " uses)\n";
  }
  std::string s = os.str();
  s.pop_back();
  return s;
}

namespace {

struct Pending {
  std::string profile;
  std::string insight;
  std::vector<const ExperienceEntry*> matches;
};

std::vector<ConsolidationDecision> decode_ops(const Json& value, const std::vector<Pending*>& asked) {
  std::vector<std::optional<ConsolidationDecision>> by_pending(asked.size());
  const auto& ops = value.at("operations");
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const auto& op = ops[k];
    ConsolidationDecision d;
    const std::string kind = op.at("operation").get<std::string>();
    d.operation = kind == "ADD" ? LibraryOp::kAdd
                  : kind == "MERGE" ? LibraryOp::kMerge
                  : kind == "PRUNE" ? LibraryOp::kPrune
                                    : LibraryOp::kKeep;
    d.new_insight = text::collapse_whitespace(op.at("new_insight").get<std::string>());
    if (op.contains("target_entry_ids") && op.at("target_entry_ids").is_array())
      d.target_entry_ids = op.at("target_entry_ids").get<std::vector<std::string>>();
    if (op.contains("merged_insight") && op.at("merged_insight").is_string())
      d.merged_insight = op.at("merged_insight").get<std::string>();
    d.rationale = op.value("rationale", "");
    // Match by text first, then by position.
    std::optional<std::size_t> slot;
    for (std::size_t i = 0; i < asked.size() && !slot; ++i)
      if (!by_pending[i] && asked[i]->insight == d.new_insight) slot = i;
    if (!slot && k < asked.size() && !by_pending[k]) slot = k;
    if (!slot) continue;
    d.new_insight = asked[*slot]->insight;
    by_pending[*slot] = std::move(d);
  }
  std::vector<ConsolidationDecision> out;
  for (std::size_t i = 0; i < asked.size(); ++i) {
    if (by_pending[i]) {
      out.push_back(std::move(*by_pending[i]));
    } else {
      out.push_back({LibraryOp::kAdd, asked[i]->insight, {}, {}, "no decision returned; defaulted to ADD", {}});
    }
  }
  return out;
}

}  // namespace

std::vector<ConsolidationDecision> consolidate(ExperienceLibrary& library, const InsightBundle& insights,
                                               const std::string& query_profile, const llm::Channel& channel,
                                               std::int64_t now, std::uint64_t seed) {
  std::vector<Pending> pending;
  for (const auto& item : insights.insights) {
    Pending p;
    p.insight = text::collapse_whitespace(item.insight);
    if (p.insight.empty()) continue;
    p.profile = text::trim(item.query_type).empty() ? query_profile : text::collapse_whitespace(item.query_type);
    p.matches = library.candidates(p.profile);
    pending.push_back(std::move(p));
  }
  if (pending.empty()) return {};

  std::vector<std::optional<ConsolidationDecision>> decisions(pending.size());
  std::vector<Pending*> asked;
  std::vector<std::size_t> asked_slots;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (pending[i].matches.empty()) {
      decisions[i] = ConsolidationDecision{LibraryOp::kAdd, pending[i].insight, {}, {}, "no matching entries", {}};
    } else {
      asked.push_back(&pending[i]);
      asked_slots.push_back(i);
    }
  }

  if (!asked.empty()) {
    std::vector<const ExperienceEntry*> shown;
    for (const Pending* p : asked)
      for (const ExperienceEntry* e : p->matches)
        if (std::find(shown.begin(), shown.end(), e) == shown.end()) shown.push_back(e);
    std::sort(shown.begin(), shown.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    std::string new_insights;
    for (std::size_t i = 0; i < asked.size(); ++i) {
      if (i) new_insights += "\n";
      new_insights += std::to_string(i + 1) + ". Query Type: " + asked[i]->profile + " | Insight: " + asked[i]->insight;
    }
    llm::ChatRequest req;
    req.system_text = "You maintain the experience library of a multi-agent question answering system.";
    req.user_text = text::substitute(resource("templates/library_ops.txt"),
                                     {{"current_library", format_entries(shown)}, {"new_insights", new_insights}});
    req.temperature = 0.0;
    req.max_tokens = 1024;
    req.tag = "orchestrator.library_ops";
    req.seed = seed;
    std::vector<ConsolidationDecision> decided;
    try {
      decided = decode_ops(llm::complete_json(channel, req, llm::Schema::kLibraryOps), asked);
    } catch (const MalformedStructuredOutput& ex) {
      spdlog::warn("library consolidation defaulted to ADD: {}", ex.what());
      for (const Pending* p : asked) decided.push_back({LibraryOp::kAdd, p->insight, {}, {}, "malformed library_ops output", {}});
    }
    for (std::size_t i = 0; i < asked.size(); ++i) decisions[asked_slots[i]] = std::move(decided[i]);
  }

  std::vector<ConsolidationDecision> ordered;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    decisions[i]->profile = pending[i].profile;
    ordered.push_back(std::move(*decisions[i]));
  }
  return library.apply(ordered, now);
}

}  // namespace evorag
