#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "evorag/llm.hpp"
#include "evorag/model.hpp"

namespace evorag::datasets {

enum class SchemaKind { kQa, kClaimVerification };

std::string_view to_string(SchemaKind k);
std::optional<SchemaKind> parse_schema_kind(std::string_view s);

struct DatasetManifest {
  std::string name;
  std::string split;
  std::filesystem::path path;
  std::size_t count = 0;
  SchemaKind schema_kind = SchemaKind::kQa;
};

Json to_json(const DatasetManifest& m);

// qa lines: {id, question, answers}; claim lines: {id, claim, label}, with the
// label becoming the single gold answer. Optional reasoning_type / complexity
// are kept. Throws IngestError with the line number on a malformed line.
std::vector<Query> ingest_dataset(const std::filesystem::path& path, SchemaKind kind);

// Query JSONL in the library's own {id, text, gold_answers, ...} form.
std::vector<Query> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries);

struct Annotation {
  ReasoningType reasoning_type = ReasoningType::kUnknown;
  Complexity complexity = Complexity::kUnknown;
};

// Reads "Reasoning type: X" and "Complexity: Y" lines; anything else is unknown.
Annotation parse_annotation(std::string_view response);

// One completion per query; unparseable replies and backend failures leave
// the fields unknown. Calls are logged in query order.
std::vector<Query> annotate(std::vector<Query> queries, const llm::Channel& channel, std::size_t parallelism = 4);

// Balanced selection over reasoning_type x complexity cells. Slots go one at
// a time to the non-exhausted cell with the fewest picks, ties to the larger
// cell. Output keeps input order.
std::vector<Query> stratified_sample(const std::vector<Query>& queries, std::size_t n, std::uint64_t seed);

// Uniform integer in [0, bound) from a 64-bit generator, by rejection; identical across platforms.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

}  // namespace evorag::datasets
