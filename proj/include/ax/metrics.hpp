#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ax/engine.hpp"

namespace ax {

// One point of the Ratio^t step function: the ratio holds from `t` until the next point.
struct RatioStep {
  double t = 0.0;
  double ratio = 0.0;
};

std::vector<RatioStep> ratio_steps(const EpisodeLog& log);

// Earliest event time with ratio >= C/100; nullopt when never reached.
std::optional<double> time_to_coverage(const EpisodeLog& log, double threshold_percent);

// Exact integral of the step function on [0, T]; the last value holds to T.
double acs(const std::vector<RatioStep>& steps, double horizon);
inline double acs(const EpisodeLog& log, double horizon) { return acs(ratio_steps(log), horizon); }

// Cells explored by two or more agents over cells explored by anyone.
double overlap_metric(const ExplorationState& state);

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population standard deviation (Welford). Throws Config on empty input.
Stat aggregate_stats(const std::vector<double>& values);

// "mean(std)" with two decimals.
std::string format_stat(const Stat& s);

struct EpisodeMetrics {
  double time = 0.0;       // T_max when the threshold was never reached.
  bool reached = false;
  double overlap = 0.0;
  double coverage = 0.0;
  double acs = 0.0;
};

EpisodeMetrics episode_metrics(const EpisodeResult& result, double t_max, double threshold_percent);

struct RunStats {
  Stat time;
  Stat overlap;
  Stat coverage;
  Stat acs;
  int episodes = 0;
};

RunStats summarize(const std::vector<EpisodeMetrics>& episodes);

// Team reward of every Step event, rebuilt from the logged explored-cell sets
// alone. Returned in event order, one entry per Step event.
std::vector<double> recompute_step_rewards(const EpisodeLog& log, const RewardConfig& cfg);

struct ResultRow {
  std::string planner;
  std::string mode;
  std::string map_size;  // "WxH"
  int n_agents = 0;
  RunStats stats;
};

inline constexpr const char* kResultsHeader =
    "planner,mode,map_size,n_agents,time_mean,time_std,overlap_mean,overlap_std,coverage_mean,coverage_std,"
    "acs_mean,acs_std,episodes";

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);

}  // namespace ax
