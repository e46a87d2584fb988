#include "evorag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag::retrieval {

LexicalIndex::LexicalIndex(std::vector<Passage> passages, Bm25Params params)
    : passages_(std::move(passages)), params_(params) {
  std::set<std::string_view> ids;
  doc_lengths_.reserve(passages_.size());
  double total = 0.0;
  for (std::uint32_t doc = 0; doc < passages_.size(); ++doc) {
    const Passage& p = passages_[doc];
    if (!ids.insert(p.id).second) throw PreconditionViolation("duplicate passage id " + p.id);
    if (text::trim(p.text).empty()) throw PreconditionViolation("passage " + p.id + " has empty text");
    const auto toks = text::tokenize(p.text);
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : toks) ++tf[t];
    for (const auto& [term, n] : tf) postings_[term].push_back({doc, n});
    doc_lengths_.push_back(static_cast<std::uint32_t>(toks.size()));
    total += static_cast<double>(toks.size());
  }
  avg_len_ = passages_.empty() ? 0.0 : total / static_cast<double>(passages_.size());
}

LexicalIndex LexicalIndex::ingest(const std::filesystem::path& corpus_jsonl, Bm25Params params) {
  std::ifstream in(corpus_jsonl, std::ios::binary);
  if (!in) throw IngestError(corpus_jsonl.string(), 0, "cannot open corpus");
  std::vector<Passage> passages;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    Passage p;
    try {
      const Json j = Json::parse(line);
      p.id = j.at("id").get<std::string>();
      p.title = j.value("title", "");
      p.text = j.at("text").get<std::string>();
    } catch (const Json::exception& ex) {
      throw IngestError(corpus_jsonl.string(), line_no, std::string("malformed passage: ") + ex.what());
    }
    if (p.id.empty()) throw IngestError(corpus_jsonl.string(), line_no, "empty passage id");
    if (text::trim(p.text).empty()) throw IngestError(corpus_jsonl.string(), line_no, "empty passage text");
    if (!ids.insert(p.id).second) throw IngestError(corpus_jsonl.string(), line_no, "duplicate passage id " + p.id);
    passages.push_back(std::move(p));
  }
  return LexicalIndex(std::move(passages), params);
}

void LexicalIndex::save(const std::filesystem::path& index_file) const {
  Json passages = Json::array();
  for (const auto& p : passages_) passages.push_back(Json{{"id", p.id}, {"title", p.title}, {"text", p.text}});
  const Json doc{{"format", kIndexFormat},
                 {"bm25", Json{{"k1", params_.k1}, {"b", params_.b}}},
                 {"passage_count", passages_.size()},
                 {"passages", std::move(passages)}};
  std::ofstream out(index_file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write index " + index_file.string());
  out << doc.dump() << '\n';
}

LexicalIndex LexicalIndex::load(const std::filesystem::path& index_file) {
  std::ifstream in(index_file, std::ios::binary);
  if (!in) throw ConfigError("cannot open index " + index_file.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& ex) {
    throw ConfigError("index " + index_file.string() + " is not valid JSON: " + ex.what());
  }
  if (doc.value("format", "") != kIndexFormat)
    throw ConfigError("index " + index_file.string() + " has unsupported format '" + doc.value("format", "") + "'");
  Bm25Params params{doc.at("bm25").at("k1").get<double>(), doc.at("bm25").at("b").get<double>()};
  std::vector<Passage> passages;
  for (const auto& p : doc.at("passages"))
    passages.push_back({p.at("id").get<std::string>(), p.at("title").get<std::string>(), p.at("text").get<std::string>()});
  return LexicalIndex(std::move(passages), params);
}

std::vector<SearchHit> LexicalIndex::search(std::string_view query, std::size_t k) const {
  if (k < 1) throw PreconditionViolation("search requires k >= 1");
  const auto terms = text::token_set(query);
  const double n = static_cast<double>(passages_.size());
  std::unordered_map<std::uint32_t, double> scores;
  for (const auto& term : terms) {
    const auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const auto& post : it->second) {
      const double tf = post.tf;
      const double norm = params_.k1 * (1.0 - params_.b + params_.b * doc_lengths_[post.doc] / avg_len_);
      scores[post.doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
  }
  std::vector<SearchHit> hits;
  hits.reserve(scores.size());
  for (const auto& [doc, score] : scores)
    if (score > 0.0) hits.push_back({&passages_[doc], score});
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.passage->id < b.passage->id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

}  // namespace evorag::retrieval
