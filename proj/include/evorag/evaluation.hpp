#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "evorag/model.hpp"

namespace evorag::eval {

// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);

struct AnswerScore {
  int em = 0;
  double f1 = 0.0;
  int accuracy = 0;
};

// Precondition: gold_answers nonempty. An empty prediction scores zero.
AnswerScore score_answer(std::string_view prediction, const std::vector<std::string>& gold_answers);

// Scores a trajectory; failed trajectories score zero but keep their tokens.
Reward make_reward(const Trajectory& trajectory, const std::vector<std::string>& gold_answers);

struct GroupMember {
  ExecutionPlan plan;
  Trajectory trajectory;
  Reward reward;
};

struct GroupRanking {
  std::vector<std::size_t> order;  // member indices, best first
  bool mixed = false;
  double baseline = 0.0;  // group mean f1
};

// f1 descending, then total_tokens ascending, then member index ascending.
// A member succeeds iff f1 > baseline; mixed iff both outcomes occur and
// max f1 > min f1.
GroupRanking rank_group(const std::vector<Reward>& rewards);

struct GroupRollout {
  std::string query_id;
  std::vector<GroupMember> members;
  GroupRanking ranking;

  bool mixed() const { return ranking.mixed; }
  bool succeeded(std::size_t member) const { return members[member].reward.f1 > ranking.baseline; }
};

GroupRollout make_group(std::string query_id, std::vector<GroupMember> members);

struct DatasetReport {
  std::string dataset;
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  double mean_accuracy = 0.0;
  double mean_tokens = 0.0;
  std::int64_t min_tokens = 0;
  std::int64_t max_tokens = 0;
  std::int64_t total_tokens = 0;
};

DatasetReport summarize(std::string dataset, const std::vector<Reward>& rewards, std::size_t failures);
Json to_json(const DatasetReport& r);
std::string csv_header();
std::string to_csv_row(const DatasetReport& r);

}  // namespace evorag::eval
