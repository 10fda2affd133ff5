#include "ax/planners.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <tuple>
#include <unordered_map>

#include "ax/error.hpp"

namespace ax {
namespace {

constexpr std::array<Cell, 8> kSteps8{{{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

std::int64_t key(Cell c) { return (static_cast<std::int64_t>(c.y) << 32) | static_cast<std::uint32_t>(c.x); }

double euclid(Cell a, Cell b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::vector<Cell> require_frontier(const KnownMap& known) {
  auto f = frontier_cells(known);
  if (f.empty()) throw Error(ErrorKind::NoFrontier, "no frontier cells remain");
  return f;
}

}  // namespace

IntGrid bfs_distance_map(const KnownMap& known, Cell source) {
  IntGrid dist = IntGrid::Constant(known.height(), known.width(), kUnreachable);
  if (!known.known_free(source)) return dist;
  std::deque<Cell> queue{source};
  dist(source.y, source.x) = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (const Cell& s : kHeadingStep) {
      const Cell n{c.x + s.x, c.y + s.y};
      if (known.known_free(n) && dist(n.y, n.x) == kUnreachable) {
        dist(n.y, n.x) = dist(c.y, c.x) + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

PathPlan astar_path(const KnownMap& known, const AgentPose& start, Cell goal) {
  if (!known.traversable(goal))
    throw Error(ErrorKind::NoPath, "goal (" + std::to_string(goal.x) + "," + std::to_string(goal.y) +
                                       ") is a known wall or out of bounds");
  if (start.cell() == goal) return {};

  // Costs in half-seconds: forward 2, turn 1.
  const int w = known.width();
  const int n_states = w * known.height() * 4;
  auto index = [w](Cell c, Heading h) { return (c.y * w + c.x) * 4 + static_cast<int>(h); };
  auto heuristic = [goal](Cell c) { return 2 * (std::abs(c.x - goal.x) + std::abs(c.y - goal.y)); };

  std::vector<int> g(static_cast<std::size_t>(n_states), kUnreachable);
  std::vector<int> parent(static_cast<std::size_t>(n_states), -1);
  std::vector<AtomicAction> via(static_cast<std::size_t>(n_states), AtomicAction::Forward);
  using Entry = std::tuple<int, int, int>;  // f, g, state
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  const int s0 = index(start.cell(), start.heading);
  g[static_cast<std::size_t>(s0)] = 0;
  open.emplace(heuristic(start.cell()), 0, s0);
  int found = -1;
  while (!open.empty()) {
    const auto [f, gc, s] = open.top();
    open.pop();
    if (gc != g[static_cast<std::size_t>(s)]) continue;
    const Cell c{(s / 4) % w, (s / 4) / w};
    const auto h = static_cast<Heading>(s % 4);
    if (c == goal) {
      found = s;
      break;
    }
    auto relax = [&](int next, int cost, AtomicAction a, Cell nc) {
      const int ng = gc + cost;
      if (ng < g[static_cast<std::size_t>(next)]) {
        g[static_cast<std::size_t>(next)] = ng;
        parent[static_cast<std::size_t>(next)] = s;
        via[static_cast<std::size_t>(next)] = a;
        open.emplace(ng + heuristic(nc), ng, next);
      }
    };
    const Cell ahead = step(c, h);
    if (known.traversable(ahead)) relax(index(ahead, h), 2, AtomicAction::Forward, ahead);
    relax(index(c, turn_left(h)), 1, AtomicAction::TurnLeft, c);
    relax(index(c, turn_right(h)), 1, AtomicAction::TurnRight, c);
  }
  if (found < 0)
    throw Error(ErrorKind::NoPath, "goal (" + std::to_string(goal.x) + "," + std::to_string(goal.y) +
                                       ") unreachable");

  PathPlan plan;
  plan.cost = g[static_cast<std::size_t>(found)] * 0.5;
  for (int s = found; s != s0; s = parent[static_cast<std::size_t>(s)]) plan.actions.push_back(via[static_cast<std::size_t>(s)]);
  std::reverse(plan.actions.begin(), plan.actions.end());
  return plan;
}

int information_gain(const BoolGrid& explored, Cell cell, double radius) {
  const int r = static_cast<int>(std::floor(radius));
  const double r2 = radius * radius + 1e-9;
  int count = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cell.x + dx;
      const int y = cell.y + dy;
      if (x < 0 || y < 0 || x >= explored.cols() || y >= explored.rows()) continue;
      if (dx * dx + dy * dy <= r2 && !explored(y, x)) ++count;
    }
  }
  return count;
}

std::vector<FrontierCluster> cluster_frontiers(const std::vector<Cell>& cells) {
  std::vector<Cell> sorted = cells;
  std::sort(sorted.begin(), sorted.end(), RowMajorLess{});
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::unordered_map<std::int64_t, std::size_t> lookup;
  for (std::size_t i = 0; i < sorted.size(); ++i) lookup.emplace(key(sorted[i]), i);

  std::vector<bool> seen(sorted.size(), false);
  std::vector<FrontierCluster> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (seen[i]) continue;
    FrontierCluster cluster;
    std::deque<std::size_t> queue{i};
    seen[i] = true;
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      cluster.members.push_back(sorted[j]);
      for (const Cell& s : kSteps8) {
        const auto it = lookup.find(key({sorted[j].x + s.x, sorted[j].y + s.y}));
        if (it != lookup.end() && !seen[it->second]) {
          seen[it->second] = true;
          queue.push_back(it->second);
        }
      }
    }
    std::sort(cluster.members.begin(), cluster.members.end(), RowMajorLess{});
    double cx = 0.0;
    double cy = 0.0;
    for (const Cell& m : cluster.members) {
      cx += m.x;
      cy += m.y;
    }
    cx /= static_cast<double>(cluster.members.size());
    cy /= static_cast<double>(cluster.members.size());
    double best = std::numeric_limits<double>::infinity();
    for (const Cell& m : cluster.members) {
      const double d = (m.x - cx) * (m.x - cx) + (m.y - cy) * (m.y - cy);
      if (d < best) {
        best = d;
        cluster.center = m;
      }
    }
    cluster.weight = static_cast<int>(cluster.members.size());
    out.push_back(std::move(cluster));
  }
  return out;
}

Cell plan_utility(const ExplorationState& state, const KnownMap& known, const AgentPose&,
                  const UtilityParams& params) {
  const auto frontier = require_frontier(known);
  Cell best = frontier.front();
  int best_ig = -1;
  for (const Cell& c : frontier) {
    const int ig = information_gain(state.merged(), c, params.ig_radius);
    if (ig > best_ig) {
      best_ig = ig;
      best = c;
    }
  }
  return best;
}

Cell plan_nearest(const ExplorationState&, const KnownMap& known, const AgentPose& pose) {
  const auto frontier = require_frontier(known);
  const IntGrid dist = bfs_distance_map(known, pose.cell());
  std::optional<Cell> best;
  int best_d = kUnreachable;
  for (const Cell& c : frontier) {
    if (dist(c.y, c.x) < best_d) {
      best_d = dist(c.y, c.x);
      best = c;
    }
  }
  if (!best) throw Error(ErrorKind::NoFrontier, "no frontier reachable through known free space");
  return *best;
}

namespace detail {

std::size_t select_rrt_cluster(const std::vector<double>& info_gain, const std::vector<double>& nav_cost,
                               bool argmin) {
  auto normalise = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    std::vector<double> out(v.size(), 0.0);
    if (*hi > *lo)
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
    return out;
  };
  const auto ig = normalise(info_gain);
  const auto nav = normalise(nav_cost);
  std::size_t best = 0;
  for (std::size_t i = 1; i < ig.size(); ++i) {
    const double u = ig[i] - nav[i];
    const double b = ig[best] - nav[best];
    if (argmin ? u < b : u > b) best = i;
  }
  return best;
}

}  // namespace detail

Cell plan_rrt(const ExplorationState& state, const KnownMap& known, const AgentPose& pose, const RrtParams& params,
              Rng& rng) {
  struct Point {
    double x;
    double y;
  };
  auto cell_of = [](Point p) { return Cell{static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))}; };
  auto collision_free = [&](Point a, Point b) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int samples = std::max(1, static_cast<int>(std::ceil(len / 0.1)));
    for (int k = 0; k <= samples; ++k) {
      const double t = static_cast<double>(k) / samples;
      const Cell c = cell_of({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
      if (!known.in_bounds(c) || known.known_wall(c)) return false;
    }
    return true;
  };

  std::vector<Point> nodes{{pose.x + 0.5, pose.y + 0.5}};
  std::vector<Cell> targets;
  for (int i = 0; i < params.max_iters && static_cast<int>(targets.size()) < params.target_cap; ++i) {
    const Point p{uniform_real(rng, 0.0, known.width()), uniform_real(rng, 0.0, known.height())};
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double d = std::hypot(nodes[k].x - p.x, nodes[k].y - p.y);
      if (d < best) {
        best = d;
        nearest = k;
      }
    }
    if (best < 1e-9) continue;
    const Point s = nodes[nearest];
    const double scale = std::min(1.0, params.step_len / best);
    const Point t{s.x + (p.x - s.x) * scale, s.y + (p.y - s.y) * scale};
    if (!collision_free(s, t)) continue;
    if (known.unknown(cell_of(t))) targets.push_back(cell_of(t));
    else nodes.push_back(t);
  }
  if (targets.empty()) return plan_nearest(state, known, pose);

  const auto clusters = cluster_frontiers(targets);
  std::vector<double> ig;
  std::vector<double> nav;
  for (const auto& c : clusters) {
    ig.push_back(information_gain(state.merged(), c.center, params.ig_radius));
    nav.push_back(euclid(c.center, pose.cell()));
  }
  return clusters[detail::select_rrt_cluster(ig, nav, params.argmin_utility)].center;
}

RealGrid apf_potential(const KnownMap& known, const std::vector<AgentPose>& poses, const std::vector<bool>& alive,
                       int agent, const std::vector<FrontierCluster>& clusters, const ApfParams& params) {
  const double inf = std::numeric_limits<double>::infinity();
  RealGrid field = RealGrid::Constant(known.height(), known.width(), inf);
  for (int y = 0; y < known.height(); ++y)
    for (int x = 0; x < known.width(); ++x)
      if (known.known_free({x, y})) field(y, x) = 0.0;

  for (std::size_t j = 0; j < poses.size(); ++j) {
    if (static_cast<int>(j) == agent || !alive[j]) continue;
    for (int y = 0; y < known.height(); ++y) {
      for (int x = 0; x < known.width(); ++x) {
        if (!known.known_free({x, y})) continue;
        const double d = euclid({x, y}, poses[j].cell());
        if (d < params.influence_radius) field(y, x) += params.resistance_gain * (params.influence_radius - d);
      }
    }
  }
  for (const auto& c : clusters) {
    const IntGrid dis = bfs_distance_map(known, c.center);
    for (int y = 0; y < known.height(); ++y)
      for (int x = 0; x < known.width(); ++x)
        if (dis(y, x) != kUnreachable) field(y, x) -= c.weight / static_cast<double>(std::max(dis(y, x), 1));
  }
  return field;
}

Cell plan_apf(const ExplorationState&, const KnownMap& known, const std::vector<AgentPose>& poses,
              const std::vector<bool>& alive, int agent, const ApfParams& params) {
  const auto frontier = require_frontier(known);
  BoolGrid is_frontier = BoolGrid::Constant(known.height(), known.width(), false);
  for (const Cell& c : frontier) is_frontier(c.y, c.x) = true;

  RealGrid field = apf_potential(known, poses, alive, agent, cluster_frontiers(frontier), params);
  Cell u = poses[static_cast<std::size_t>(agent)].cell();
  for (int cnt = 0; !is_frontier(u.y, u.x) && cnt < params.max_iters; ++cnt) {
    field(u.y, u.x) += params.repeat_penalty;
    std::optional<Cell> next;
    for (const Cell& s : kHeadingStep) {
      const Cell v{u.x + s.x, u.y + s.y};
      if (known.known_free(v) && (!next || field(v.y, v.x) < field(next->y, next->x))) next = v;
    }
    if (!next) break;
    u = *next;
  }
  if (is_frontier(u.y, u.x)) return u;

  // Descent budget exhausted: settle on the frontier cell of lowest potential.
  Cell best = frontier.front();
  for (const Cell& c : frontier)
    if (field(c.y, c.x) < field(best.y, best.x)) best = c;
  return best;
}

IntGrid voronoi_partition(const KnownMap& known, const std::vector<AgentPose>& poses,
                          const std::vector<bool>& alive) {
  IntGrid owner = IntGrid::Constant(known.height(), known.width(), -1);
  IntGrid best = IntGrid::Constant(known.height(), known.width(), kUnreachable);
  for (std::size_t j = 0; j < poses.size(); ++j) {
    if (!alive[j]) continue;
    const IntGrid d = bfs_distance_map(known, poses[j].cell());
    for (int y = 0; y < known.height(); ++y) {
      for (int x = 0; x < known.width(); ++x) {
        if (d(y, x) < best(y, x)) {
          best(y, x) = d(y, x);
          owner(y, x) = static_cast<int>(j);
        }
      }
    }
  }
  return owner;
}

Cell plan_voronoi(const ExplorationState& state, const KnownMap& known, const std::vector<AgentPose>& poses,
                  const std::vector<bool>& alive, int agent, const UtilityParams& params) {
  const auto frontier = require_frontier(known);
  const IntGrid owner = voronoi_partition(known, poses, alive);
  std::optional<Cell> best;
  int best_ig = -1;
  for (const Cell& c : frontier) {
    if (owner(c.y, c.x) != agent) continue;
    const int ig = information_gain(state.merged(), c, params.ig_radius);
    if (ig > best_ig) {
      best_ig = ig;
      best = c;
    }
  }
  if (best) return *best;
  return plan_utility(state, known, poses[static_cast<std::size_t>(agent)], params);
}

std::string to_string(PlannerKind kind) {
  switch (kind) {
    case PlannerKind::Utility: return "utility";
    case PlannerKind::Nearest: return "nearest";
    case PlannerKind::Rrt: return "rrt";
    case PlannerKind::Apf: return "apf";
    case PlannerKind::Voronoi: return "voronoi";
    case PlannerKind::Policy: return "policy";
  }
  return "unknown";
}

PlannerKind planner_from_string(const std::string& name) {
  for (auto k : {PlannerKind::Utility, PlannerKind::Nearest, PlannerKind::Rrt, PlannerKind::Apf,
                 PlannerKind::Voronoi, PlannerKind::Policy})
    if (to_string(k) == name) return k;
  throw Error(ErrorKind::Config, "unknown planner '" + name + "'");
}

}  // namespace ax
