#include "ax/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "ax/error.hpp"

namespace ax {

std::vector<RatioStep> ratio_steps(const EpisodeLog& log) {
  std::vector<RatioStep> out;
  for (const auto& e : log.events) {
    if (!out.empty() && out.back().ratio == e.ratio) continue;
    if (!out.empty() && out.back().t == e.t) {
      out.back().ratio = e.ratio;
      continue;
    }
    out.push_back({e.t, e.ratio});
  }
  return out;
}

std::optional<double> time_to_coverage(const EpisodeLog& log, double threshold_percent) {
  const double target = threshold_percent / 100.0;
  for (const auto& e : log.events)
    if (e.ratio >= target) return e.t;
  return std::nullopt;
}

double acs(const std::vector<RatioStep>& steps, double horizon) {
  if (!(horizon > 0.0)) throw Error(ErrorKind::Config, "acs horizon must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double lo = std::max(0.0, steps[i].t);
    const double hi = i + 1 < steps.size() ? std::min(steps[i + 1].t, horizon) : horizon;
    if (hi > lo) total += steps[i].ratio * (hi - lo);
    if (hi >= horizon) break;
  }
  return total;
}

double overlap_metric(const ExplorationState& state) {
  Grid<int> count = Grid<int>::Zero(state.height(), state.width());
  for (int a = 0; a < state.agent_count(); ++a) count += state.explored_by(a).cast<int>();
  const auto explored = (count > 0).count();
  if (explored == 0) return 0.0;
  return static_cast<double>((count >= 2).count()) / static_cast<double>(explored);
}

Stat aggregate_stats(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorKind::Config, "aggregate_stats on empty input");
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  return {mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(n)))};
}

std::string format_stat(const Stat& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f(%.2f)", s.mean, s.std);
  return buf;
}

EpisodeMetrics episode_metrics(const EpisodeResult& result, double t_max, double threshold_percent) {
  EpisodeMetrics m;
  const auto t = time_to_coverage(result.log, threshold_percent);
  m.reached = t.has_value();
  m.time = t ? std::min(*t, t_max) : t_max;
  // Overlap is defined at the threshold crossing; unreached episodes fall back to the final state.
  m.overlap = overlap_metric(result.success_state ? *result.success_state : result.final_state);
  m.coverage = result.log.final_ratio;
  m.acs = acs(result.log, t_max);
  return m;
}

RunStats summarize(const std::vector<EpisodeMetrics>& episodes) {
  std::vector<double> time, overlap, coverage, area;
  for (const auto& e : episodes) {
    time.push_back(e.time);
    overlap.push_back(e.overlap);
    coverage.push_back(e.coverage);
    area.push_back(e.acs);
  }
  return {aggregate_stats(time), aggregate_stats(overlap), aggregate_stats(coverage), aggregate_stats(area),
          static_cast<int>(episodes.size())};
}

std::vector<double> recompute_step_rewards(const EpisodeLog& log, const RewardConfig& cfg) {
  const int w = log.map.width(), h = log.map.height();
  const int n = static_cast<int>(log.spawns.size());
  std::vector<Cell> spawn_cells;
  for (const auto& p : log.spawns) spawn_cells.push_back(p.cell());
  const CoverageDomain domain = coverage_domain(log.map, spawn_cells);

  std::vector<BoolGrid> own(static_cast<std::size_t>(n), BoolGrid::Constant(h, w, false));
  BoolGrid merged = BoolGrid::Constant(h, w, false);
  SuccessLatch latch;
  std::vector<double> out;
  for (const auto& e : log.events) {
    if (e.kind != EventKind::Spawn && e.kind != EventKind::Step) continue;
    std::vector<int> overlap(static_cast<std::size_t>(n), 0);
    int fresh = 0;
    for (const Cell& c : e.explored) {
      if (!merged(c.y, c.x)) ++fresh;
      for (int a = 0; a < n; ++a) {
        if (a == e.agent || !own[static_cast<std::size_t>(a)](c.y, c.x)) continue;
        ++overlap[static_cast<std::size_t>(e.agent)];
        ++overlap[static_cast<std::size_t>(a)];
      }
    }
    for (const Cell& c : e.explored) {
      own[static_cast<std::size_t>(e.agent)](c.y, c.x) = true;
      merged(c.y, c.x) = true;
    }
    if (e.kind != EventKind::Step) continue;
    const double ratio = coverage_ratio(domain, merged);
    double r = coverage_reward(fresh, fresh, cfg);
    r += latch(ratio, cfg);
    for (int v : overlap) r += overlap_penalty(v, ratio, cfg);
    out.push_back(r);
  }
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << '\n';
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    const RunStats& s = r.stats;
    out << r.planner << ',' << r.mode << ',' << r.map_size << ',' << r.n_agents << ',' << s.time.mean << ','
        << s.time.std << ',' << s.overlap.mean << ',' << s.overlap.std << ',' << s.coverage.mean << ','
        << s.coverage.std << ',' << s.acs.mean << ',' << s.acs.std << ',' << s.episodes << '\n';
  }
  out.precision(old);
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader)
    throw Error(ErrorKind::CorruptLog, "results csv: unexpected header");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 13) throw Error(ErrorKind::CorruptLog, "results csv line " + std::to_string(line_no));
    try {
      ResultRow r;
      r.planner = f[0];
      r.mode = f[1];
      r.map_size = f[2];
      r.n_agents = std::stoi(f[3]);
      r.stats.time = {std::stod(f[4]), std::stod(f[5])};
      r.stats.overlap = {std::stod(f[6]), std::stod(f[7])};
      r.stats.coverage = {std::stod(f[8]), std::stod(f[9])};
      r.stats.acs = {std::stod(f[10]), std::stod(f[11])};
      r.stats.episodes = std::stoi(f[12]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::CorruptLog, "results csv line " + std::to_string(line_no));
    }
  }
  return rows;
}

}  // namespace ax
