#include "evorag/prompts.hpp"

#include <fstream>
#include <sstream>

#include "evorag/error.hpp"
#include "evorag/resources.hpp"
#include "evorag/text.hpp"

namespace evorag {

std::string render_prompt(const PromptState& state) {
  std::string out = state.core_text;
  if (!state.behavioral_principles.empty()) {
    out += "\n\n";
    out += kPrinciplesHeader;
    for (const auto& p : state.behavioral_principles) out += "\n- " + p;
  }
  if (!state.operational_rules.empty()) {
    out += "\n\n";
    out += kRulesHeader;
    for (const auto& r : state.operational_rules) out += "\n- " + r;
  }
  return out;
}

namespace {

// Splits "\n\n<header>\n- a\n- b" off the end of `text` if present.
std::optional<std::vector<std::string>> take_block(std::string& text, std::string_view header) {
  const std::string marker = "\n\n" + std::string(header) + "\n";
  const auto pos = text.rfind(marker);
  if (pos == std::string::npos) return std::nullopt;
  std::vector<std::string> items;
  std::string_view block = std::string_view(text).substr(pos + marker.size());
  std::size_t start = 0;
  while (start <= block.size()) {
    auto end = block.find('\n', start);
    if (end == std::string_view::npos) end = block.size();
    const auto line = block.substr(start, end - start);
    if (!line.starts_with("- ")) return std::nullopt;
    items.emplace_back(line.substr(2));
    start = end + 1;
  }
  text.resize(pos);
  return items;
}

}  // namespace

ParsedPrompt parse_rendered_prompt(std::string_view rendered) {
  ParsedPrompt out;
  std::string rest(rendered);
  if (auto rules = take_block(rest, kRulesHeader)) out.operational_rules = std::move(*rules);
  if (auto principles = take_block(rest, kPrinciplesHeader)) out.behavioral_principles = std::move(*principles);
  out.core_text = std::move(rest);
  return out;
}

std::string default_core_text(std::string_view role) {
  return text::trim(resource("prompts/" + std::string(role) + ".txt"));
}

PromptHistory::PromptHistory(PromptState initial, Json provenance) {
  versions_.push_back({std::move(initial), 0, std::move(provenance)});
}

void PromptHistory::push(PromptState next, std::int64_t created_at, Json provenance) {
  const PromptState& cur = current();
  if (next.version <= cur.version) throw PreconditionViolation("prompt versions must strictly increase");
  if (next.core_text != cur.core_text) throw PreconditionViolation("core_text of " + cur.role + " must not change");
  versions_.push_back({std::move(next), created_at, std::move(provenance)});
}

Json PromptHistory::to_json() const {
  Json history = Json::array();
  for (const auto& v : versions_) {
    history.push_back(Json{{"version", v.state.version},
                           {"core_text", v.state.core_text},
                           {"operational_rules", v.state.operational_rules},
                           {"behavioral_principles", v.state.behavioral_principles},
                           {"created_at", v.created_at},
                           {"provenance", v.provenance}});
  }
  return Json{{"role", current().role}, {"char_budget", current().char_budget}, {"history", std::move(history)}};
}

PromptHistory PromptHistory::from_json(const Json& j) {
  PromptHistory h;
  const std::string role = j.at("role").get<std::string>();
  const std::size_t budget = j.at("char_budget").get<std::size_t>();
  for (const auto& v : j.at("history")) {
    PromptState s;
    s.role = role;
    s.char_budget = budget;
    s.version = v.at("version").get<int>();
    s.core_text = v.at("core_text").get<std::string>();
    s.operational_rules = v.at("operational_rules").get<std::vector<std::string>>();
    s.behavioral_principles = v.at("behavioral_principles").get<std::vector<std::string>>();
    h.versions_.push_back({std::move(s), v.at("created_at").get<std::int64_t>(), v.value("provenance", Json())});
  }
  if (h.versions_.empty()) throw ConfigError("prompt history for " + role + " is empty");
  return h;
}

PromptStore PromptStore::defaults(const AgentRegistry& registry, std::size_t char_budget) {
  PromptStore store;
  for (const auto& role : registry.roles()) {
    PromptState s;
    s.role = role.name;
    s.core_text = default_core_text(role.name);
    s.char_budget = char_budget;
    store.histories_.emplace(role.name, PromptHistory(std::move(s)));
  }
  return store;
}

PromptStore PromptStore::load(const std::filesystem::path& dir, const AgentRegistry& registry,
                              std::size_t char_budget) {
  PromptStore store = defaults(registry, char_budget);
  if (!std::filesystem::exists(dir)) return store;
  if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt store " + dir.string() + " is not a directory");
  for (const auto& role : registry.roles()) {
    const auto path = dir / (role.name + ".json");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read prompt store file " + path.string());
    try {
      store.histories_[role.name] = PromptHistory::from_json(Json::parse(in));
    } catch (const Json::exception& ex) {
      throw ConfigError("malformed prompt store file " + path.string() + ": " + ex.what());
    }
  }
  return store;
}

void PromptStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [role, hist] : histories_) {
    const auto path = dir / (role + ".json");
    const auto tmp = dir / (role + ".json.tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write " + tmp.string());
      out << hist.to_json().dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }
}

PromptSet PromptStore::snapshot() const {
  PromptSet out;
  for (const auto& [role, hist] : histories_) out.emplace(role, hist.current());
  return out;
}

const PromptHistory& PromptStore::history(const std::string& role) const {
  const auto it = histories_.find(role);
  if (it == histories_.end()) throw PreconditionViolation("no prompt for role " + role);
  return it->second;
}

PromptHistory& PromptStore::history(const std::string& role) {
  const auto it = histories_.find(role);
  if (it == histories_.end()) throw PreconditionViolation("no prompt for role " + role);
  return it->second;
}

}  // namespace evorag
