#include "evorag/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "evorag/error.hpp"

namespace evorag::analytics {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

// Adjacency over the deduplicated edge set, self-loops removed, node indices by sorted name.
std::vector<std::vector<std::size_t>> adjacency(const TrajectoryGraph& g) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) index[g.nodes[i]] = i;
  std::vector<std::vector<std::size_t>> adj(g.nodes.size());
  for (const auto& [edge, count] : g.edges) {
    (void)count;
    if (edge.first == edge.second) continue;
    adj[index.at(edge.first)].push_back(index.at(edge.second));
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

}  // namespace

TrajectoryGraph TrajectoryGraph::from_sequence(const std::vector<std::string>& roles) {
  TrajectoryGraph g;
  std::set<std::string> nodes(roles.begin(), roles.end());
  g.nodes.assign(nodes.begin(), nodes.end());
  for (std::size_t i = 1; i < roles.size(); ++i) ++g.edges[{roles[i - 1], roles[i]}];
  return g;
}

std::vector<std::string> executed_roles(const Trajectory& t) {
  std::vector<const StepRecord*> records;
  for (const auto& r : t.records) records.push_back(&r);
  std::stable_sort(records.begin(), records.end(), [](const auto* a, const auto* b) { return a->step_index < b->step_index; });
  std::vector<std::string> out;
  for (const auto* r : records) out.push_back(r->agent);
  return out;
}

TrajectoryGraph TrajectoryGraph::from_trajectory(const Trajectory& t) { return from_sequence(executed_roles(t)); }

std::optional<double> transition_entropy(const std::map<Edge, std::size_t>& counts, EntropyForm form) {
  std::size_t total = 0;
  for (const auto& [e, c] : counts) total += c;
  if (total == 0) return std::nullopt;
  auto entropy_of = [](const std::vector<std::size_t>& cs, std::size_t n) {
    double h = 0.0;
    for (std::size_t c : cs) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(n);
      h -= p * std::log(p);
    }
    return h;
  };
  if (form == EntropyForm::kJoint) {
    std::vector<std::size_t> cs;
    for (const auto& [e, c] : counts) cs.push_back(c);
    return entropy_of(cs, total);
  }
  std::map<std::string, std::vector<std::size_t>> by_source;
  for (const auto& [e, c] : counts) by_source[e.first].push_back(c);
  double h = 0.0;
  for (const auto& [src, cs] : by_source) {
    const std::size_t n = std::accumulate(cs.begin(), cs.end(), std::size_t{0});
    if (n == 0) continue;
    h += static_cast<double>(n) / static_cast<double>(total) * entropy_of(cs, n);
  }
  return h;
}

std::optional<double> transition_entropy(const std::vector<std::vector<std::string>>& sequences, EntropyForm form) {
  std::map<Edge, std::size_t> counts;
  for (const auto& s : sequences)
    for (std::size_t i = 1; i < s.size(); ++i) ++counts[{s[i - 1], s[i]}];
  return transition_entropy(counts, form);
}

std::vector<EntropyPoint> windowed_entropy(const std::vector<std::vector<std::string>>& sequences, std::size_t width,
                                           std::size_t stride, EntropyForm form) {
  if (width == 0 || stride == 0) throw PreconditionViolation("window width and stride must be positive");
  std::vector<EntropyPoint> out;
  const std::size_t n = sequences.size();
  if (n == 0) return out;
  auto window = [&](std::size_t start, std::size_t end) {
    std::vector<std::vector<std::string>> slice(sequences.begin() + static_cast<std::ptrdiff_t>(start),
                                                sequences.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back({start, end, transition_entropy(slice, form)});
  };
  if (n < width) {
    window(0, n);
    return out;
  }
  for (std::size_t start = 0; start + width <= n; start += stride) window(start, start + width);
  return out;
}

std::size_t count_simple_cycles(const TrajectoryGraph& g) {
  const auto adj = adjacency(g);
  const std::size_t n = adj.size();
  std::size_t count = 0;
  std::vector<bool> on_path(n, false);
  // Each cycle is counted once, from its smallest node; the path only visits larger nodes.
  std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t start, std::size_t v) {
    for (std::size_t w : adj[v]) {
      if (w == start) {
        ++count;
      } else if (w > start && !on_path[w]) {
        on_path[w] = true;
        dfs(start, w);
        on_path[w] = false;
      }
    }
  };
  for (std::size_t s = 0; s < n; ++s) {
    on_path[s] = true;
    dfs(s, s);
    on_path[s] = false;
  }
  return count;
}

std::size_t diameter(const TrajectoryGraph& g) {
  const auto adj = adjacency(g);
  std::size_t best = 0;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    std::vector<std::size_t> dist(adj.size(), SIZE_MAX);
    std::deque<std::size_t> queue{s};
    dist[s] = 0;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      best = std::max(best, dist[v]);
      for (std::size_t w : adj[v])
        if (dist[w] == SIZE_MAX) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
    }
  }
  return best;
}

GraphMetrics graph_metrics(const TrajectoryGraph& g, double f1) {
  GraphMetrics m;
  m.agent_count = g.nodes.size();
  m.node_efficiency = m.agent_count ? f1 / static_cast<double>(m.agent_count) : 0.0;
  for (const auto& [e, c] : g.edges)
    if (e.first == e.second) m.self_loops += c;
  m.cycle_count = count_simple_cycles(g);
  m.diameter = diameter(g);
  return m;
}

std::vector<double> lowess(const std::vector<Point>& points, double frac) {
  const std::size_t n = points.size();
  if (n < 3) throw PreconditionViolation("lowess needs at least 3 points");
  if (!(frac > 0.0 && frac <= 1.0)) throw PreconditionViolation("lowess frac must be in (0, 1]");
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n))), 2, n);
  std::vector<double> out(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = points[i].x;
    for (std::size_t j = 0; j < n; ++j) dist[j] = std::abs(points[j].x - xi);
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    const double h = sorted[k - 1];
    double sw = 0.0, swx = 0.0, swy = 0.0;
    std::vector<double> w(n, 0.0);
    if (h > 0.0) {
      for (std::size_t j = 0; j < n; ++j) {
        const double u = dist[j] / h;
        if (u < 1.0) {
          const double t = 1.0 - u * u * u;
          w[j] = t * t * t;
        }
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) w[j] = dist[j] == 0.0 ? 1.0 : 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
      sw += w[j];
      swx += w[j] * points[j].x;
      swy += w[j] * points[j].y;
    }
    const double xbar = swx / sw, ybar = swy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = points[j].x - xbar;
      sxx += w[j] * dx * dx;
      sxy += w[j] * dx * (points[j].y - ybar);
    }
    const double scale = std::max(1.0, h * h) * sw;
    out[i] = sxx > 1e-12 * scale ? ybar + sxy / sxx * (xi - xbar) : ybar;
  }
  return out;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kInitial: return "initial";
    case Phase::kExploration: return "exploration";
    case Phase::kRefinement: return "refinement";
    case Phase::kOptimization: return "optimization";
  }
  return "initial";
}

std::vector<std::size_t> phase_sizes(std::size_t n) {
  std::vector<std::size_t> sizes(4, n / 4);
  for (std::size_t i = 0; i < n % 4; ++i) ++sizes[3 - i];
  return sizes;
}

std::vector<double> min_max_normalize(const std::vector<double>& values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double a = *lo, b = *hi;
  std::vector<double> out;
  for (double v : values) out.push_back(b > a ? (v - a) / (b - a) : 0.0);
  return out;
}

std::vector<PhaseRow> phase_report(const std::vector<MetricSample>& samples) {
  if (samples.empty()) throw PreconditionViolation("phase_report needs a nonempty log");
  std::set<std::int64_t> iteration_set;
  std::set<std::string> names;
  for (const auto& s : samples) {
    iteration_set.insert(s.iteration);
    for (const auto& [k, v] : s.metrics) names.insert(k);
  }
  const std::vector<std::int64_t> iterations(iteration_set.begin(), iteration_set.end());
  const auto sizes = phase_sizes(iterations.size());
  std::map<std::int64_t, Phase> phase_of;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t i = 0; i < sizes[p]; ++i) phase_of[iterations[pos++]] = static_cast<Phase>(p);

  std::map<std::string, std::vector<double>> normalized;
  for (const auto& name : names) {
    std::vector<double> values;
    for (const auto& s : samples) values.push_back(s.metrics.count(name) ? s.metrics.at(name) : 0.0);
    normalized[name] = min_max_normalize(values);
  }

  std::set<std::string> groups{"all"};
  for (const auto& s : samples)
    if (!s.group.empty()) groups.insert(s.group);
  std::vector<PhaseRow> rows;
  for (const auto& group : groups) {
    for (std::size_t p = 0; p < 4; ++p) {
      PhaseRow row;
      row.group = group;
      row.phase = static_cast<Phase>(p);
      for (const auto& name : names) row.means[name] = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (phase_of.at(samples[i].iteration) != row.phase) continue;
        if (group != "all" && samples[i].group != group) continue;
        ++row.count;
        for (const auto& name : names) row.means[name] += normalized[name][i];
      }
      if (row.count)
        for (auto& [name, v] : row.means) v /= static_cast<double>(row.count);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

Json to_json(const std::vector<PhaseRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json means = Json::object();
    for (const auto& [k, v] : r.means) means[k] = v;
    out.push_back(Json{{"group", r.group}, {"phase", to_string(r.phase)}, {"count", r.count}, {"means", means}});
  }
  return out;
}

std::vector<LoggedTrajectory> read_trajectory_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read trajectory log " + path.string());
  std::vector<LoggedTrajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      LoggedTrajectory t;
      t.trajectory = j.get<Trajectory>();
      if (j.contains("reward")) t.reward = j.at("reward").get<Reward>();
      if (j.contains("meta")) {
        const Json& m = j.at("meta");
        t.iteration = m.value("iteration", std::int64_t{0});
        t.kind = m.value("kind", "");
        t.reasoning_type = m.value("reasoning_type", "");
      }
      out.push_back(std::move(t));
    } catch (const Json::exception& ex) {
      throw IngestError(path.string(), lineno, ex.what());
    }
  }
  return out;
}

void analyze_log(const std::filesystem::path& log, const std::filesystem::path& out_dir, const AnalyzeOptions& options) {
  const auto all = read_trajectory_log(log);
  std::vector<const LoggedTrajectory*> rollouts;
  for (const auto& t : all)
    if (t.kind.empty() || t.kind == "rollout") rollouts.push_back(&t);
  if (rollouts.empty()) throw PreconditionViolation("no rollout trajectories in " + log.string());
  std::filesystem::create_directories(out_dir);

  std::vector<std::vector<std::string>> sequences;
  for (const auto* t : rollouts) sequences.push_back(executed_roles(t->trajectory));
  std::string entropy = "window_start,window_end,first_iteration,last_iteration,entropy\n";
  for (const auto& p : windowed_entropy(sequences, options.window, options.stride, options.form)) {
    entropy += std::to_string(p.window_start) + "," + std::to_string(p.window_end) + "," +
               std::to_string(rollouts[p.window_start]->iteration) + "," +
               std::to_string(rollouts[p.window_end - 1]->iteration) + "," + (p.entropy ? num(*p.entropy) : "") + "\n";
  }
  write_file(out_dir / "entropy.csv", entropy);

  std::string metrics = "trajectory_id,iteration,reasoning_type,agent_count,node_efficiency,self_loops,cycle_count,diameter,f1,tokens\n";
  std::vector<MetricSample> samples;
  std::map<std::int64_t, std::pair<double, std::size_t>> tokens_by_iteration;
  for (const auto* t : rollouts) {
    if (t->trajectory.records.empty()) continue;
    const auto m = graph_metrics(TrajectoryGraph::from_trajectory(t->trajectory), t->reward.f1);
    metrics += t->trajectory.id + "," + std::to_string(t->iteration) + "," + t->reasoning_type + "," +
               std::to_string(m.agent_count) + "," + num(m.node_efficiency) + "," + std::to_string(m.self_loops) + "," +
               std::to_string(m.cycle_count) + "," + std::to_string(m.diameter) + "," + num(t->reward.f1) + "," +
               std::to_string(t->reward.total_tokens) + "\n";
    samples.push_back({t->iteration,
                       t->reasoning_type == "unknown" ? "" : t->reasoning_type,
                       {{"agent_count", static_cast<double>(m.agent_count)},
                        {"node_efficiency", m.node_efficiency},
                        {"self_loops", static_cast<double>(m.self_loops)},
                        {"cycle_count", static_cast<double>(m.cycle_count)},
                        {"diameter", static_cast<double>(m.diameter)},
                        {"f1", t->reward.f1},
                        {"tokens", static_cast<double>(t->reward.total_tokens)}}});
    auto& acc = tokens_by_iteration[t->iteration];
    acc.first += static_cast<double>(t->reward.total_tokens);
    ++acc.second;
  }
  write_file(out_dir / "metrics.csv", metrics);
  write_file(out_dir / "phases.json", (samples.empty() ? Json::array() : to_json(phase_report(samples))).dump(2) + "\n");

  std::vector<Point> points;
  for (const auto& [it, acc] : tokens_by_iteration)
    points.push_back({static_cast<double>(it), acc.first / static_cast<double>(acc.second)});
  std::vector<double> smooth;
  if (points.size() >= 3) {
    smooth = lowess(points, options.frac);
  } else {
    spdlog::warn("fewer than 3 iterations; token trend left unsmoothed");
  }
  std::string tokens = "iteration,mean_tokens,smoothed\n";
  for (std::size_t i = 0; i < points.size(); ++i)
    tokens += num(points[i].x) + "," + num(points[i].y) + "," + (smooth.empty() ? "" : num(smooth[i])) + "\n";
  write_file(out_dir / "tokens_lowess.csv", tokens);
}

}  // namespace evorag::analytics
