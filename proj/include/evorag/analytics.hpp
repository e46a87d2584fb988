#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evorag/model.hpp"

namespace evorag::analytics {

using Edge = std::pair<std::string, std::string>;

// Roles as nodes; one edge per consecutive pair of executed steps.
struct TrajectoryGraph {
  std::vector<std::string> nodes;  // sorted
  std::map<Edge, std::size_t> edges;

  static TrajectoryGraph from_sequence(const std::vector<std::string>& roles);
  static TrajectoryGraph from_trajectory(const Trajectory& t);
};

// Role sequence in executed (step) order.
std::vector<std::string> executed_roles(const Trajectory& t);

enum class EntropyForm { kJoint, kConditional };

// Shannon entropy (nats) of the transition distribution. The conditional form
// is the count-weighted sum of per-source entropies. nullopt without transitions.
std::optional<double> transition_entropy(const std::map<Edge, std::size_t>& transition_counts,
                                         EntropyForm form = EntropyForm::kJoint);
std::optional<double> transition_entropy(const std::vector<std::vector<std::string>>& sequences,
                                         EntropyForm form = EntropyForm::kJoint);

struct EntropyPoint {
  std::size_t window_start = 0;  // index of the first trajectory in the window
  std::size_t window_end = 0;    // one past the last
  std::optional<double> entropy;
};

// Windows of `width` trajectories every `stride`; a final partial window is
// included only when the series is shorter than `width`.
std::vector<EntropyPoint> windowed_entropy(const std::vector<std::vector<std::string>>& sequences, std::size_t width = 50,
                                           std::size_t stride = 10, EntropyForm form = EntropyForm::kJoint);

struct GraphMetrics {
  std::size_t agent_count = 0;
  double node_efficiency = 0.0;
  std::size_t self_loops = 0;
  std::size_t cycle_count = 0;
  std::size_t diameter = 0;
};

// Simple directed cycles of length >= 2 over the deduplicated edge set.
std::size_t count_simple_cycles(const TrajectoryGraph& g);
// Longest finite shortest path over reachable ordered pairs.
std::size_t diameter(const TrajectoryGraph& g);
GraphMetrics graph_metrics(const TrajectoryGraph& g, double f1);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Tricube local linear regression, one pass, evaluated at each input x.
std::vector<double> lowess(const std::vector<Point>& points, double frac = 0.3);

enum class Phase { kInitial, kExploration, kRefinement, kOptimization };
std::string_view to_string(Phase p);

// Sizes of four contiguous segments of n items; the remainder goes to later phases.
std::vector<std::size_t> phase_sizes(std::size_t n);

// Min-max normalisation; a constant series maps to zeros.
std::vector<double> min_max_normalize(const std::vector<double>& values);

struct PhaseRow {
  std::string group;  // reasoning type, or "all"
  Phase phase = Phase::kInitial;
  std::size_t count = 0;
  std::map<std::string, double> means;
};

struct MetricSample {
  std::int64_t iteration = 0;
  std::string group;
  std::map<std::string, double> metrics;
};

// Samples are split by iteration order into four phases. Rows are produced
// for all samples ("all") and per group label.
std::vector<PhaseRow> phase_report(const std::vector<MetricSample>& samples);
Json to_json(const std::vector<PhaseRow>& rows);

// One rollout line from a trajectory log.
struct LoggedTrajectory {
  Trajectory trajectory;
  Reward reward;
  std::int64_t iteration = 0;
  std::string kind;
  std::string reasoning_type;
};

std::vector<LoggedTrajectory> read_trajectory_log(const std::filesystem::path& path);

struct AnalyzeOptions {
  std::size_t window = 50;
  std::size_t stride = 10;
  double frac = 0.3;
  EntropyForm form = EntropyForm::kJoint;
};

// Writes entropy.csv, metrics.csv, phases.json and tokens_lowess.csv.
void analyze_log(const std::filesystem::path& log, const std::filesystem::path& out_dir, const AnalyzeOptions& options);

}  // namespace evorag::analytics
