#include "evorag/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"
#include "evorag/executor.hpp"
#include "evorag/resources.hpp"
#include "evorag/text.hpp"

namespace evorag::datasets {

std::string_view to_string(SchemaKind k) { return k == SchemaKind::kQa ? "qa" : "claim"; }

std::optional<SchemaKind> parse_schema_kind(std::string_view s) {
  const std::string l = text::to_lower(text::trim(s));
  if (l == "qa") return SchemaKind::kQa;
  if (l == "claim" || l == "claim_verification") return SchemaKind::kClaimVerification;
  return std::nullopt;
}

Json to_json(const DatasetManifest& m) {
  return Json{{"name", m.name}, {"split", m.split}, {"path", m.path.string()}, {"count", m.count},
              {"schema_kind", m.schema_kind == SchemaKind::kQa ? "qa" : "claim_verification"}};
}

namespace {

std::string required_string(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) throw std::invalid_argument(std::string("missing string field '") + key + "'");
  std::string v = text::trim(j.at(key).get<std::string>());
  if (v.empty()) throw std::invalid_argument(std::string("empty field '") + key + "'");
  return v;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string(), 0, "cannot open file");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(Json::parse(line));
    } catch (const Json::exception& ex) {
      throw IngestError(path.string(), lineno, ex.what());
    } catch (const std::invalid_argument& ex) {
      throw IngestError(path.string(), lineno, ex.what());
    }
  }
}

}  // namespace

std::vector<Query> ingest_dataset(const std::filesystem::path& path, SchemaKind kind) {
  std::vector<Query> out;
  std::map<std::string, bool> seen;
  for_each_line(path, [&](const Json& j) {
    Query q;
    if (!j.contains("id")) throw std::invalid_argument("missing field 'id'");
    q.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    if (q.id.empty()) throw std::invalid_argument("empty field 'id'");
    if (seen[q.id]) throw std::invalid_argument("duplicate id '" + q.id + "'");
    seen[q.id] = true;
    if (kind == SchemaKind::kQa) {
      q.text = required_string(j, "question");
      if (!j.contains("answers") || !j.at("answers").is_array() || j.at("answers").empty())
        throw std::invalid_argument("missing or empty 'answers' array");
      for (const auto& a : j.at("answers")) {
        if (!a.is_string() || text::trim(a.get<std::string>()).empty())
          throw std::invalid_argument("answers must be nonempty strings");
        q.gold_answers.push_back(a.get<std::string>());
      }
    } else {
      q.text = required_string(j, "claim");
      q.gold_answers = {required_string(j, "label")};
    }
    if (j.contains("reasoning_type") && j.at("reasoning_type").is_string())
      q.reasoning_type = parse_reasoning_type(j.at("reasoning_type").get<std::string>()).value_or(ReasoningType::kUnknown);
    if (j.contains("complexity") && j.at("complexity").is_string())
      q.complexity = parse_complexity(j.at("complexity").get<std::string>()).value_or(Complexity::kUnknown);
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
  std::vector<Query> out;
  for_each_line(path, [&](const Json& j) {
    Query q = j.get<Query>();
    check_query(q);
    out.push_back(std::move(q));
  });
  return out;
}

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& q : queries) out << Json(q).dump() << "\n";
}

Annotation parse_annotation(std::string_view response) {
  Annotation a;
  std::istringstream lines{std::string(response)};
  std::string line;
  auto first_word = [](std::string_view v) {
    const auto tokens = text::tokenize(v);
    return tokens.empty() ? std::string() : tokens.front();
  };
  while (std::getline(lines, line)) {
    const std::string t = text::trim(line);
    if (text::starts_with_ci(t, "Reasoning type:")) {
      a.reasoning_type = parse_reasoning_type(first_word(std::string_view(t).substr(15))).value_or(ReasoningType::kUnknown);
    } else if (text::starts_with_ci(t, "Complexity:")) {
      a.complexity = parse_complexity(first_word(std::string_view(t).substr(11))).value_or(Complexity::kUnknown);
    }
  }
  return a;
}

std::vector<Query> annotate(std::vector<Query> queries, const llm::Channel& channel, std::size_t parallelism) {
  std::vector<llm::CallBuffer> buffers(queries.size());
  auto one = [&](std::size_t i) {
    Query& q = queries[i];
    llm::ChatRequest req;
    req.system_text = "You classify questions for a question answering benchmark.";
    req.user_text = text::substitute(resource("templates/annotate.txt"), {{"question", q.text}});
    req.temperature = 0.0;
    req.max_tokens = 32;
    req.tag = "annotate";
    req.trace = q.id;
    try {
      const Annotation a = parse_annotation(channel.with_sink(&buffers[i]).complete(req).text);
      if (a.reasoning_type == ReasoningType::kUnknown || a.complexity == Complexity::kUnknown)
        spdlog::warn("{}: annotation not fully understood", q.id);
      q.reasoning_type = a.reasoning_type;
      q.complexity = a.complexity;
    } catch (const BackendUnavailable& ex) {
      spdlog::warn("{}: annotation failed: {}", q.id, ex.what());
      q.reasoning_type = ReasoningType::kUnknown;
      q.complexity = Complexity::kUnknown;
    }
  };
  const std::size_t width = std::max<std::size_t>(1, parallelism);
  for (std::size_t start = 0; start < queries.size(); start += width) {
    const std::size_t end = std::min(queries.size(), start + width);
    std::vector<std::future<void>> futures;
    for (std::size_t i = start; i < end; ++i) futures.push_back(std::async(std::launch::async, one, i));
    for (auto& f : futures) f.get();
  }
  if (channel.sink())
    for (auto& b : buffers)
      for (auto& c : b.take()) channel.sink()->record(std::move(c));
  return queries;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw PreconditionViolation("uniform_below needs a positive bound");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

std::vector<Query> stratified_sample(const std::vector<Query>& queries, std::size_t n, std::uint64_t seed) {
  if (n > queries.size())
    throw PreconditionViolation("sample size " + std::to_string(n) + " exceeds " + std::to_string(queries.size()) + " queries");
  using Cell = std::pair<std::string, std::string>;
  std::map<Cell, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < queries.size(); ++i)
    cells[{std::string(to_string(queries[i].reasoning_type)), std::string(to_string(queries[i].complexity))}].push_back(i);

  std::vector<std::pair<Cell, const std::vector<std::size_t>*>> order;
  for (const auto& [cell, members] : cells) order.push_back({cell, &members});
  std::map<Cell, std::size_t> picks;
  for (std::size_t slot = 0; slot < n; ++slot) {
    const std::pair<Cell, const std::vector<std::size_t>*>* best = nullptr;
    for (const auto& c : order) {
      if (picks[c.first] >= c.second->size()) continue;
      if (!best || picks[c.first] < picks[best->first] ||
          (picks[c.first] == picks[best->first] && c.second->size() > best->second->size()))
        best = &c;
    }
    ++picks[best->first];
  }
  const std::size_t base = cells.empty() ? 0 : n / cells.size();
  for (const auto& [cell, members] : cells)
    if (members.size() < base)
      spdlog::warn("cell {}/{} has {} queries, below its quota of {}; shortfall redistributed", cell.first, cell.second,
                   members.size(), base);

  std::vector<std::size_t> chosen;
  for (const auto& [cell, members] : cells) {
    std::vector<std::size_t> pool = members;
    std::mt19937_64 rng(derive_seed(seed, cell.first + "/" + cell.second));
    const std::size_t k = picks[cell];
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Query> out;
  for (std::size_t i : chosen) out.push_back(queries[i]);
  return out;
}

}  // namespace evorag::datasets
