#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "evorag/model.hpp"

namespace evorag::retrieval {

struct Passage {
  std::string id;
  std::string title;
  std::string text;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct SearchHit {
  const Passage* passage = nullptr;
  double score = 0.0;
};

inline constexpr std::string_view kIndexFormat = "evorag-lexical-index/1";

// Immutable inverted index over passage text with BM25 ranking.
class LexicalIndex {
 public:
  struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;
  };

  LexicalIndex() = default;
  // Throws PreconditionViolation on duplicate ids or empty text.
  explicit LexicalIndex(std::vector<Passage> passages, Bm25Params params = {});

  static LexicalIndex ingest(const std::filesystem::path& corpus_jsonl, Bm25Params params = {});
  static LexicalIndex load(const std::filesystem::path& index_file);
  void save(const std::filesystem::path& index_file) const;

  // At most k passages with positive score, by descending score then ascending id.
  std::vector<SearchHit> search(std::string_view query, std::size_t k) const;

  std::size_t size() const { return passages_.size(); }
  const std::vector<Passage>& passages() const { return passages_; }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  double average_doc_length() const { return avg_len_; }
  const Bm25Params& params() const { return params_; }

 private:
  std::vector<Passage> passages_;
  std::map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_len_ = 0.0;
  Bm25Params params_;
};

}  // namespace evorag::retrieval
