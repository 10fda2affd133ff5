#pragma once

// Slow, obviously-correct reference implementations used to check the library.
// Nothing here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

#include "ax/grid.hpp"
#include "ax/perception.hpp"
#include "ax/planners.hpp"
#include "ax/rng.hpp"

namespace oracle {

using ax::BoolGrid;
using ax::Cell;
using ax::GridMap;
using ax::IntGrid;
using ax::KnownMap;
using ax::Knowledge;

inline constexpr int kInf = std::numeric_limits<int>::max();

// Random walls sprinkled over an open map with a wall ring. Not necessarily connected.
inline GridMap random_grid(int w, int h, double wall_p, ax::Rng& rng) {
  GridMap m(w, h, ax::Tile::Wall);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x)
      m.set({x, y}, ax::uniform_real(rng, 0.0, 1.0) < wall_p ? ax::Tile::Wall : ax::Tile::Free);
  return m;
}

// Random three-valued knowledge grid.
inline KnownMap random_known(int w, int h, double wall_p, double unknown_p, ax::Rng& rng) {
  GridMap m(w, h, ax::Tile::Free);
  BoolGrid seen = BoolGrid::Constant(h, w, false);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      m.set({x, y}, ax::uniform_real(rng, 0.0, 1.0) < wall_p ? ax::Tile::Wall : ax::Tile::Free);
      seen(y, x) = ax::uniform_real(rng, 0.0, 1.0) >= unknown_p;
    }
  return KnownMap(m, seen);
}

// BFS-free connectivity count: repeatedly relax until no change.
inline int flood_count(const GridMap& m, Cell start) {
  BoolGrid in = BoolGrid::Constant(m.height(), m.width(), false);
  in(start.y, start.x) = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        if (in(y, x) || !m.is_free({x, y})) continue;
        const bool touch = (x > 0 && in(y, x - 1)) || (y > 0 && in(y - 1, x)) ||
                           (x + 1 < m.width() && in(y, x + 1)) || (y + 1 < m.height() && in(y + 1, x));
        if (touch) in(y, x) = changed = true;
      }
  }
  return static_cast<int>(in.count());
}

// Dijkstra with unit weights over known-free cells.
inline IntGrid dijkstra(const KnownMap& k, Cell src) {
  IntGrid d = IntGrid::Constant(k.height(), k.width(), kInf);
  if (!k.known_free(src)) return d;
  using Item = std::tuple<int, int, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  d(src.y, src.x) = 0;
  pq.emplace(0, src.y, src.x);
  const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
  while (!pq.empty()) {
    auto [dist, y, x] = pq.top();
    pq.pop();
    if (dist > d(y, x)) continue;
    for (int i = 0; i < 4; ++i) {
      const Cell n{x + dx[i], y + dy[i]};
      if (!k.known_free(n)) continue;
      if (dist + 1 < d(n.y, n.x)) {
        d(n.y, n.x) = dist + 1;
        pq.emplace(dist + 1, n.y, n.x);
      }
    }
  }
  return d;
}

// Uniform-cost search over (cell, heading) with forward 1.0, turns 0.5.
// Costs are kept in half-seconds to stay integral. Returns -1 when unreachable.
inline double ucs_time(const KnownMap& k, const ax::AgentPose& start, Cell goal) {
  if (start.cell() == goal) return 0.0;
  const int W = k.width(), H = k.height();
  std::vector<int> best(static_cast<std::size_t>(W * H * 4), kInf);
  auto id = [&](int x, int y, int h) { return static_cast<std::size_t>((y * W + x) * 4 + h); };
  using Item = std::tuple<int, int, int, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  best[id(start.x, start.y, static_cast<int>(start.heading))] = 0;
  pq.emplace(0, start.x, start.y, static_cast<int>(start.heading));
  const int dx[4] = {0, 1, 0, -1}, dy[4] = {-1, 0, 1, 0};
  while (!pq.empty()) {
    auto [c, x, y, h] = pq.top();
    pq.pop();
    if (c > best[id(x, y, h)]) continue;
    if (Cell{x, y} == goal) return c / 2.0;
    auto relax = [&](int nx, int ny, int nh, int nc) {
      if (nc < best[id(nx, ny, nh)]) {
        best[id(nx, ny, nh)] = nc;
        pq.emplace(nc, nx, ny, nh);
      }
    };
    relax(x, y, (h + 1) % 4, c + 1);
    relax(x, y, (h + 3) % 4, c + 1);
    const Cell n{x + dx[h], y + dy[h]};
    if (k.traversable(n)) relax(n.x, n.y, h, c + 2);
  }
  return -1.0;
}

// Replays an action sequence; returns the final cell, or {-1,-1} if it walks into a known wall.
inline Cell replay_actions(const KnownMap& k, ax::AgentPose p, const std::vector<ax::AtomicAction>& actions) {
  for (auto a : actions) {
    if (a == ax::AtomicAction::TurnLeft) p.heading = ax::turn_left(p.heading);
    else if (a == ax::AtomicAction::TurnRight) p.heading = ax::turn_right(p.heading);
    else {
      const Cell n = ax::step(p.cell(), p.heading);
      if (!k.traversable(n)) return {-1, -1};
      p.x = n.x;
      p.y = n.y;
    }
  }
  return p.cell();
}

// Explored free cells with an unexplored 4-neighbour, by direct scan.
inline std::set<std::pair<int, int>> frontier_scan(const GridMap& m, const BoolGrid& explored) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!explored(y, x) || m.at({x, y}) != ax::Tile::Free) continue;
      const Cell nb[4] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const Cell& n : nb)
        if (m.in_bounds(n) && !explored(n.y, n.x)) {
          out.insert({y, x});
          break;
        }
    }
  return out;
}

// Geodesic-nearest alive agent per known-free cell, ties to the lower id, via
// one Dijkstra per agent.
inline IntGrid voronoi(const KnownMap& k, const std::vector<ax::AgentPose>& poses, const std::vector<bool>& alive) {
  IntGrid owner = IntGrid::Constant(k.height(), k.width(), -1);
  IntGrid best = IntGrid::Constant(k.height(), k.width(), kInf);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (!alive[i]) continue;
    const IntGrid d = dijkstra(k, poses[i].cell());
    for (int y = 0; y < k.height(); ++y)
      for (int x = 0; x < k.width(); ++x)
        if (d(y, x) < best(y, x)) {
          best(y, x) = d(y, x);
          owner(y, x) = static_cast<int>(i);
        }
  }
  return owner;
}

// Connected components by union-find under 8-connectivity.
inline int component_count(const std::vector<Cell>& cells) {
  std::vector<int> parent(cells.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = i + 1; j < cells.size(); ++j)
      if (std::abs(cells[i].x - cells[j].x) <= 1 && std::abs(cells[i].y - cells[j].y) <= 1)
        parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
  int n = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) n += find(static_cast<int>(i)) == static_cast<int>(i);
  return n;
}

// Line of sight for short rays: intermediate cells stepped along the major
// axis with the minor coordinate rounded half away from the origin.
inline bool los_short(const GridMap& m, Cell a, Cell b) {
  const int dx = b.x - a.x, dy = b.y - a.y;
  const int n = std::max(std::abs(dx), std::abs(dy));
  for (int i = 1; i < n; ++i) {
    auto along = [&](int d) {
      const int mag = (2 * i * std::abs(d) + n) / (2 * n);
      return d < 0 ? -mag : mag;
    };
    const Cell c{a.x + along(dx), a.y + along(dy)};
    if (!m.is_free(c)) return false;
  }
  return true;
}

// Unexplored cells within a Euclidean disc, by enumeration.
inline int disc_count(const BoolGrid& explored, Cell c, double r) {
  int n = 0;
  for (int y = 0; y < explored.rows(); ++y)
    for (int x = 0; x < explored.cols(); ++x) {
      const double d = std::hypot(x - c.x, y - c.y);
      if (d <= r + 1e-12 && !explored(y, x)) ++n;
    }
  return n;
}

// Midpoint Riemann sum of a right-continuous step function.
inline double riemann(const std::vector<std::pair<double, double>>& steps, double T, int n) {
  double s = 0.0;
  const double h = T / n;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * h;
    double v = 0.0;
    for (const auto& [ts, r] : steps)
      if (ts <= t) v = r;
    s += v * h;
  }
  return s;
}

// Backward recursion written out term by term: A_b = sum_k prod(gamma lambda)^{D} delta_{b+k}.
inline std::vector<double> gae_direct(const std::vector<double>& r, const std::vector<double>& v,
                                      const std::vector<int>& steps, double gamma, double lambda, double boot) {
  const std::size_t n = r.size();
  std::vector<double> delta(n), adv(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double next = b + 1 < n ? v[b + 1] : boot;
    delta[b] = r[b] + std::pow(gamma, steps[b]) * next - v[b];
  }
  for (std::size_t b = 0; b < n; ++b) {
    double acc = 0.0, w = 1.0;
    for (std::size_t k = b; k < n; ++k) {
      acc += w * delta[k];
      w *= std::pow(gamma * lambda, steps[k]);
    }
    adv[b] = acc;
  }
  return adv;
}

}  // namespace oracle
