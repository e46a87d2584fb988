#include "evorag/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <sstream>

#include "evorag/error.hpp"
#include "evorag/text.hpp"

namespace evorag::eval {

std::string normalize_answer(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(u)));
  }
  std::istringstream words(cleaned);
  std::string word, out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double token_f1(const std::string& pred, const std::string& gold) {
  const auto p = split_words(pred);
  const auto g = split_words(gold);
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

AnswerScore score_answer(std::string_view prediction, const std::vector<std::string>& gold_answers) {
  if (gold_answers.empty()) throw PreconditionViolation("score_answer needs at least one gold answer");
  AnswerScore s;
  const std::string pred = normalize_answer(prediction);
  if (pred.empty()) return s;
  for (const auto& g : gold_answers) {
    const std::string gold = normalize_answer(g);
    if (pred == gold) s.em = 1;
    s.f1 = std::max(s.f1, token_f1(pred, gold));
    if (!gold.empty() && pred.find(gold) != std::string::npos) s.accuracy = 1;
  }
  if (s.em == 1) s.f1 = 1.0;
  return s;
}

Reward make_reward(const Trajectory& trajectory, const std::vector<std::string>& gold_answers) {
  Reward r;
  r.total_tokens = trajectory.total_tokens();
  if (trajectory.status != TrajectoryStatus::kCompleted) return r;
  const AnswerScore s = score_answer(trajectory.final_answer, gold_answers);
  r.f1 = s.f1;
  r.em = s.em;
  r.accuracy = s.accuracy;
  return r;
}

GroupRanking rank_group(const std::vector<Reward>& rewards) {
  if (rewards.size() < 2) throw PreconditionViolation("rank_group needs at least 2 members");
  GroupRanking g;
  g.order.resize(rewards.size());
  std::iota(g.order.begin(), g.order.end(), std::size_t{0});
  std::stable_sort(g.order.begin(), g.order.end(), [&](std::size_t a, std::size_t b) {
    if (rewards[a].f1 != rewards[b].f1) return rewards[a].f1 > rewards[b].f1;
    return rewards[a].total_tokens < rewards[b].total_tokens;
  });
  double sum = 0.0, lo = rewards[0].f1, hi = rewards[0].f1;
  for (const auto& r : rewards) {
    sum += r.f1;
    lo = std::min(lo, r.f1);
    hi = std::max(hi, r.f1);
  }
  g.baseline = sum / static_cast<double>(rewards.size());
  bool any_success = false, any_failure = false;
  for (const auto& r : rewards) (r.f1 > g.baseline ? any_success : any_failure) = true;
  g.mixed = any_success && any_failure && hi > lo;
  return g;
}

GroupRollout make_group(std::string query_id, std::vector<GroupMember> members) {
  GroupRollout group;
  group.query_id = std::move(query_id);
  group.members = std::move(members);
  std::vector<Reward> rewards;
  for (const auto& m : group.members) rewards.push_back(m.reward);
  group.ranking = rank_group(rewards);
  return group;
}

DatasetReport summarize(std::string dataset, const std::vector<Reward>& rewards, std::size_t failures) {
  DatasetReport r;
  r.dataset = std::move(dataset);
  r.count = rewards.size();
  r.failures = failures;
  if (rewards.empty()) return r;
  r.min_tokens = rewards[0].total_tokens;
  r.max_tokens = rewards[0].total_tokens;
  for (const auto& w : rewards) {
    r.mean_em += w.em;
    r.mean_f1 += w.f1;
    r.mean_accuracy += w.accuracy;
    r.total_tokens += w.total_tokens;
    r.min_tokens = std::min(r.min_tokens, w.total_tokens);
    r.max_tokens = std::max(r.max_tokens, w.total_tokens);
  }
  const double n = static_cast<double>(rewards.size());
  r.mean_em /= n;
  r.mean_f1 /= n;
  r.mean_accuracy /= n;
  r.mean_tokens = static_cast<double>(r.total_tokens) / n;
  return r;
}

Json to_json(const DatasetReport& r) {
  return Json{{"dataset", r.dataset},
              {"count", r.count},
              {"failures", r.failures},
              {"em", r.mean_em},
              {"f1", r.mean_f1},
              {"accuracy", r.mean_accuracy},
              {"tokens", Json{{"mean", r.mean_tokens}, {"min", r.min_tokens}, {"max", r.max_tokens}, {"total", r.total_tokens}}}};
}

std::string csv_header() { return "dataset,count,failures,em,f1,accuracy,mean_tokens,min_tokens,max_tokens,total_tokens"; }

std::string to_csv_row(const DatasetReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << r.dataset << ',' << r.count << ',' << r.failures << ',' << r.mean_em << ',' << r.mean_f1 << ','
     << r.mean_accuracy << ',' << r.mean_tokens << ',' << r.min_tokens << ',' << r.max_tokens << ',' << r.total_tokens;
  return os.str();
}

}  // namespace evorag::eval
