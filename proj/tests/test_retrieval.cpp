#include <doctest.h>

#include <fstream>
#include <map>
#include <random>

#include "evorag/error.hpp"
#include "evorag/retrieval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace evorag;
using namespace evorag::retrieval;

namespace {

std::vector<Passage> random_corpus(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> vocab = {"paris", "france", "river", "seine", "tower", "iron",
                                                 "music", "sonata", "born", "capital", "city", "bridge"};
  std::vector<Passage> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng() % 12;
    std::string text;
    for (std::size_t w = 0; w < len; ++w) text += vocab[rng() % vocab.size()] + (w % 3 == 2 ? ", " : " ");
    char id[16];
    std::snprintf(id, sizeof id, "d%03zu", n - 1 - i);
    out.push_back({id, "", text});
  }
  return out;
}

}  // namespace

TEST_CASE("BM25 matches the brute-force oracle on random corpora") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto passages = random_corpus(rng, 3 + rng() % 20);
    std::vector<oracle::Doc> docs;
    for (const auto& p : passages) docs.push_back({p.id, p.text});
    const LexicalIndex index(passages);
    const std::string query = passages[rng() % passages.size()].text.substr(0, 20) + " river unknownterm";
    const std::size_t k = 1 + rng() % 6;
    const auto hits = index.search(query, k);
    const auto all = oracle::bm25(docs, query, docs.size());
    std::map<std::string, double> by_id(all.begin(), all.end());
    REQUIRE(hits.size() == std::min(k, all.size()));
    for (std::size_t i = 0; i < hits.size(); ++i) {
      CHECK(hits[i].score == doctest::Approx(all[i].second).epsilon(1e-9));
      CHECK(hits[i].score == doctest::Approx(by_id.at(hits[i].passage->id)).epsilon(1e-9));
      if (i > 0) {
        CHECK(hits[i - 1].score >= hits[i].score);
        if (hits[i - 1].score == hits[i].score) CHECK(hits[i - 1].passage->id < hits[i].passage->id);
      }
    }
  }
}

TEST_CASE("ties are broken by ascending id") {
  const LexicalIndex index({{"b", "", "same text"}, {"a", "", "same text"}, {"c", "", "other"}});
  const auto hits = index.search("same", 5);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].passage->id == "a");
  CHECK(hits[1].passage->id == "b");
}

TEST_CASE("no positive score means no hit") {
  const LexicalIndex index({{"a", "", "alpha"}, {"b", "", "beta"}});
  CHECK(index.search("gamma", 3).empty());
  CHECK_THROWS_AS(index.search("alpha", 0), PreconditionViolation);
}

TEST_CASE("construction preconditions") {
  CHECK_THROWS_AS(LexicalIndex({{"a", "", "x"}, {"a", "", "y"}}), PreconditionViolation);
  CHECK_THROWS_AS(LexicalIndex({{"a", "", "  "}}), PreconditionViolation);
}

TEST_CASE("ingest, save and load round trip") {
  const auto index = LexicalIndex::ingest(support::fixture("world/corpus.jsonl"));
  CHECK(index.size() == 20);
  const auto dir = support::scratch("retrieval");
  index.save(dir / "index.json");
  const auto again = LexicalIndex::load(dir / "index.json");
  CHECK(again.size() == index.size());
  CHECK(again.doc_lengths() == index.doc_lengths());
  const auto a = index.search("Which river flows through Paris?", 5);
  const auto b = again.search("Which river flows through Paris?", 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].passage->id == b[i].passage->id);
    CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("ingest errors carry line numbers") {
  const auto dir = support::scratch("retrieval-bad");
  {
    std::ofstream out(dir / "c.jsonl");
    out << R"({"id":"a","text":"x"})" << "\n\n" << R"({"id":"a","text":"y"})" << "\n";
  }
  try {
    LexicalIndex::ingest(dir / "c.jsonl");
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.line() == 3);
  }
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"format":"other"})";
  }
  CHECK_THROWS_AS(LexicalIndex::load(dir / "bad.json"), ConfigError);
}
