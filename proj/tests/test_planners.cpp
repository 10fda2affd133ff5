#include <doctest.h>

#include <set>

#include "ax/error.hpp"
#include "ax/planners.hpp"
#include "ax/worldgen.hpp"
#include "oracles.hpp"

using namespace ax;

namespace {

// Explored state seeded by sensing from a few random free cells.
struct Scene {
  GridMap map;
  ExplorationState state;
  KnownMap known;
  std::vector<AgentPose> poses;
};

Scene random_scene(std::uint64_t seed, int n_agents, int sensed) {
  Scene s;
  s.map = generate_map({15, 15, {4, 9}, seed});
  s.state = ExplorationState(15, 15, n_agents);
  s.poses = spawn_agents(s.map, n_agents, seed + 1);
  Rng rng(seed);
  const auto free = s.map.free_cells();
  for (int i = 0; i < n_agents; ++i) sense(s.map, s.poses[static_cast<std::size_t>(i)], s.state, i);
  for (int k = 0; k < sensed; ++k) {
    const Cell c = free[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(free.size()) - 1))];
    sense(s.map, {c.x, c.y, Heading::N}, s.state, k % n_agents);
  }
  s.known = KnownMap(s.map, s.state.merged());
  return s;
}

KnownMap open_known(int w, int h, const std::vector<Cell>& seen_box_min, const std::vector<Cell>& seen_box_max) {
  GridMap m(w, h, Tile::Free);
  BoolGrid ex = BoolGrid::Constant(h, w, false);
  for (std::size_t b = 0; b < seen_box_min.size(); ++b)
    for (int y = seen_box_min[b].y; y <= seen_box_max[b].y; ++y)
      for (int x = seen_box_min[b].x; x <= seen_box_max[b].x; ++x) ex(y, x) = true;
  return KnownMap(m, ex);
}

}  // namespace

TEST_CASE("bfs distance map equals unit Dijkstra") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const KnownMap k = oracle::random_known(11, 11, 0.3, 0.2, rng);
    Cell src{uniform_int(rng, 0, 10), uniform_int(rng, 0, 10)};
    const IntGrid got = bfs_distance_map(k, src);
    const IntGrid want = oracle::dijkstra(k, src);
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) CHECK(got(y, x) == (want(y, x) == oracle::kInf ? kUnreachable : want(y, x)));
  }
}

TEST_CASE("bfs trivial cases") {
  GridMap m(7, 3, Tile::Free);
  const KnownMap k(m, BoolGrid::Constant(3, 7, true));
  const IntGrid d = bfs_distance_map(k, {0, 1});
  CHECK(d(1, 0) == 0);
  CHECK(d(1, 6) == 6);
}

TEST_CASE("A* time cost equals uniform-cost search over (cell, heading)") {
  Rng rng(5);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const KnownMap k = oracle::random_known(15, 15, 0.3, 0.3, rng);
    AgentPose start{uniform_int(rng, 0, 14), uniform_int(rng, 0, 14), static_cast<Heading>(uniform_int(rng, 0, 3))};
    const Cell goal{uniform_int(rng, 0, 14), uniform_int(rng, 0, 14)};
    if (!k.traversable(start.cell())) continue;
    const double want = oracle::ucs_time(k, start, goal);
    if (want < 0.0 || !k.traversable(goal)) {
      CHECK_THROWS_AS(astar_path(k, start, goal), Error);
      continue;
    }
    const PathPlan p = astar_path(k, start, goal);
    CHECK(p.cost == want);
    double c = 0.0;
    for (auto a : p.actions) c += a == AtomicAction::Forward ? 1.0 : 0.5;
    CHECK(c == want);
    CHECK(oracle::replay_actions(k, start, p.actions) == goal);
    ++solved;
  }
  CHECK(solved > 100);
}

TEST_CASE("A* trivial cases") {
  GridMap m(5, 5, Tile::Free);
  const KnownMap k(m, BoolGrid::Constant(5, 5, true));
  CHECK(astar_path(k, {2, 2, Heading::N}, {2, 2}).actions.empty());
  const PathPlan one = astar_path(k, {2, 2, Heading::N}, {2, 1});
  REQUIRE(one.actions.size() == 1);
  CHECK(one.actions[0] == AtomicAction::Forward);
  CHECK(one.cost == 1.0);
  m.set({4, 4}, Tile::Wall);
  const KnownMap k2(m, BoolGrid::Constant(5, 5, true));
  try {
    astar_path(k2, {2, 2, Heading::N}, {4, 4});
    FAIL("expected NoPath");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoPath);
  }
}

TEST_CASE("A* routes through unknown cells") {
  GridMap m(7, 3, Tile::Free);
  BoolGrid ex = BoolGrid::Constant(3, 7, false);
  ex(1, 0) = true;
  const KnownMap k(m, ex);
  const PathPlan p = astar_path(k, {0, 1, Heading::E}, {6, 1});
  CHECK(p.cost == 6.0);
}

TEST_CASE("information gain matches disc enumeration") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    BoolGrid ex = BoolGrid::Constant(9, 9, false);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x) ex(y, x) = uniform_real(rng, 0, 1) < 0.5;
    const Cell c{uniform_int(rng, 0, 8), uniform_int(rng, 0, 8)};
    for (double r : {1.0, 1.5, 2.0, 3.0}) CHECK(information_gain(ex, c, r) == oracle::disc_count(ex, c, r));
    CHECK(information_gain(ex, c, 2.0) >= information_gain(ex, c, 1.0));
  }
  const BoolGrid none = BoolGrid::Constant(9, 9, false);
  CHECK(information_gain(none, {4, 4}, 1.0) == 5);
  CHECK(information_gain(BoolGrid::Constant(9, 9, true), {4, 4}, 2.0) == 0);
}

TEST_CASE("frontier clusters: count equals union-find components") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Cell> cells;
    std::set<std::pair<int, int>> used;
    const int n = uniform_int(rng, 0, 40);
    for (int i = 0; i < n; ++i) {
      const Cell c{uniform_int(rng, 0, 11), uniform_int(rng, 0, 11)};
      if (used.insert({c.x, c.y}).second) cells.push_back(c);
    }
    const auto clusters = cluster_frontiers(cells);
    CHECK(static_cast<int>(clusters.size()) == oracle::component_count(cells));
    std::size_t total = 0;
    for (const auto& c : clusters) {
      CHECK(c.weight == static_cast<int>(c.members.size()));
      total += c.members.size();
      bool member = false;
      for (const Cell& m : c.members) member = member || m == c.center;
      CHECK(member);
    }
    CHECK(total == cells.size());
  }
  CHECK(cluster_frontiers({}).empty());
  const auto diag = cluster_frontiers({{1, 1}, {2, 2}});
  REQUIRE(diag.size() == 1);
  CHECK(diag[0].weight == 2);
}

TEST_CASE("utility is the brute-force argmax of information gain") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = random_scene(seed, 1, 2);
    const auto frontier = frontier_cells(s.known);
    if (frontier.empty()) continue;
    int best = -1;
    Cell want{};
    for (const Cell& c : frontier) {
      const int ig = oracle::disc_count(s.state.merged(), c, 2.0);
      if (ig > best) best = ig, want = c;  // frontier is row-major, so ties keep the smallest
    }
    CHECK(plan_utility(s.state, s.known, s.poses[0]) == want);
  }
}

TEST_CASE("nearest is the brute-force distance minimiser and never beats utility") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = random_scene(seed, 1, 2);
    const auto frontier = frontier_cells(s.known);
    if (frontier.empty()) continue;
    const IntGrid d = oracle::dijkstra(s.known, s.poses[0].cell());
    int best = oracle::kInf;
    for (const Cell& c : frontier) best = std::min(best, d(c.y, c.x));
    const Cell n = plan_nearest(s.state, s.known, s.poses[0]);
    CHECK(d(n.y, n.x) == best);
    const Cell u = plan_utility(s.state, s.known, s.poses[0]);
    CHECK(d(n.y, n.x) <= d(u.y, u.x));
  }
}

TEST_CASE("planners refuse when no frontier is left") {
  GridMap m = generate_map({9, 9, {1, 1}, 0});
  ExplorationState st(9, 9, 1);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) st.mark(0, {x, y});
  const KnownMap k(m, st.merged());
  const std::vector<AgentPose> poses{{4, 4, Heading::N}};
  const std::vector<bool> alive{true};
  Rng rng(1);
  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind([&] { plan_utility(st, k, poses[0]); }) == ErrorKind::NoFrontier);
  CHECK(kind([&] { plan_nearest(st, k, poses[0]); }) == ErrorKind::NoFrontier);
  CHECK(kind([&] { plan_rrt(st, k, poses[0], {}, rng); }) == ErrorKind::NoFrontier);
  CHECK(kind([&] { plan_apf(st, k, poses, alive, 0, {}); }) == ErrorKind::NoFrontier);
  CHECK(kind([&] { plan_voronoi(st, k, poses, alive, 0); }) == ErrorKind::NoFrontier);
}

TEST_CASE("simple frontier examples") {
  // frontier at distance 2 to the east and 9 to the west
  GridMap m(15, 3, Tile::Wall);
  for (int x = 0; x < 15; ++x) m.set({x, 1}, Tile::Free);
  BoolGrid ex = BoolGrid::Constant(3, 15, false);
  for (int x = 1; x <= 12; ++x) ex(1, x) = true;
  for (int x = 0; x < 15; ++x) ex(0, x) = ex(2, x) = true;
  const KnownMap k(m, ex);
  ExplorationState st(15, 3, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 15; ++x)
      if (ex(y, x)) st.mark(0, {x, y});
  const auto f = frontier_cells(k);
  REQUIRE(f.size() == 2);
  CHECK(plan_nearest(st, k, {10, 1, Heading::N}) == Cell{12, 1});
  CHECK(plan_nearest(st, k, {2, 1, Heading::N}) == Cell{1, 1});
}

TEST_CASE("rrt in an unknown interior returns an unknown cell") {
  GridMap m(9, 9, Tile::Free);
  ExplorationState st(9, 9, 1);
  st.mark(0, {4, 4});
  const KnownMap k(m, st.merged());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Cell g = plan_rrt(st, k, {4, 4, Heading::N}, {}, rng);
    CHECK(k.unknown(g));
    Rng again(seed);
    CHECK(plan_rrt(st, k, {4, 4, Heading::N}, {}, again) == g);
  }
}

TEST_CASE("rrt selection is invariant to scaling the information gain") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 8);
    std::vector<double> ig(n), nav(n), ig_scaled(n);
    for (int i = 0; i < n; ++i) {
      ig[i] = uniform_int(rng, 0, 12);
      nav[i] = uniform_real(rng, 0.0, 20.0);
      ig_scaled[i] = ig[i] * 3.7;
    }
    CHECK(detail::select_rrt_cluster(ig, nav, false) == detail::select_rrt_cluster(ig_scaled, nav, false));
    CHECK(detail::select_rrt_cluster(ig, nav, true) == detail::select_rrt_cluster(ig_scaled, nav, true));
  }
  // prose sign: large IG, small cost wins
  CHECK(detail::select_rrt_cluster({1, 9}, {1, 1}, false) == 1);
  CHECK(detail::select_rrt_cluster({1, 9}, {1, 1}, true) == 0);
}

TEST_CASE("rrt falls back to nearest when the map is known") {
  // Known everywhere except one pocket that the tree can't land in.
  const Scene s = random_scene(3, 1, 60);
  const auto f = frontier_cells(s.known);
  if (!f.empty()) {
    RrtParams p;
    p.max_iters = 0;  // no samples -> no targets -> fallback
    Rng rng(0);
    CHECK(plan_rrt(s.state, s.known, s.poses[0], p, rng) == plan_nearest(s.state, s.known, s.poses[0]));
  }
}

TEST_CASE("apf: single cluster descent ends on the frontier") {
  // 7x7 open room; the explored block is x 0..3; frontier at x = 3
  const KnownMap k = open_known(7, 7, {{0, 0}}, {{3, 6}});
  ExplorationState st(7, 7, 1);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x <= 3; ++x) st.mark(0, {x, y});
  const std::vector<AgentPose> poses{{0, 3, Heading::N}};
  const Cell g = plan_apf(st, k, poses, {true}, 0, {});
  CHECK(g.x == 3);

  // hand check of the field against a recomputation
  const auto clusters = cluster_frontiers(frontier_cells(k));
  REQUIRE(clusters.size() == 1);
  const RealGrid f = apf_potential(k, poses, {true}, 0, clusters, {});
  const IntGrid dis = oracle::dijkstra(k, clusters[0].center);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x <= 3; ++x)
      CHECK(f(y, x) == doctest::Approx(-7.0 / std::max(dis(y, x), 1)).epsilon(1e-12));
}

TEST_CASE("apf: a peer on the route changes the goal; zero gain does not") {
  // corridor room with two frontier clusters at both ends
  const KnownMap k = open_known(13, 5, {{2, 0}}, {{10, 4}});
  ExplorationState st(13, 5, 2);
  for (int y = 0; y < 5; ++y)
    for (int x = 2; x <= 10; ++x) st.mark(0, {x, y});
  const std::vector<AgentPose> solo{{5, 2, Heading::N}, {0, 0, Heading::N}};
  const Cell alone = plan_apf(st, k, solo, {true, false}, 0, {});
  CHECK(alone.x == 2);
  const std::vector<AgentPose> blocked{{5, 2, Heading::N}, {3, 2, Heading::N}};
  const Cell pushed = plan_apf(st, k, blocked, {true, true}, 0, {});
  CHECK_FALSE(pushed == alone);
  ApfParams zero;
  zero.resistance_gain = 0.0;
  CHECK(plan_apf(st, k, blocked, {true, true}, 0, zero) == alone);
}

TEST_CASE("apf goals are frontier cells") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scene s = random_scene(seed, 2, 3);
    const auto f = frontier_cells(s.known);
    if (f.empty()) continue;
    const Cell g = plan_apf(s.state, s.known, s.poses, {true, true}, 0, {});
    CHECK(std::find(f.begin(), f.end(), g) != f.end());
  }
}

TEST_CASE("voronoi partition equals brute-force geodesic assignment") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const KnownMap k = oracle::random_known(13, 13, 0.25, 0.2, rng);
    std::vector<AgentPose> poses;
    std::vector<bool> alive;
    for (int i = 0; i < 3; ++i) {
      Cell c{uniform_int(rng, 0, 12), uniform_int(rng, 0, 12)};
      poses.push_back({c.x, c.y, Heading::N});
      alive.push_back(uniform_int(rng, 0, 3) != 0);
    }
    CHECK((voronoi_partition(k, poses, alive) == oracle::voronoi(k, poses, alive)).all());
  }
}

TEST_CASE("voronoi examples") {
  // symmetric corridor, agents at mirrored ends
  const KnownMap k = open_known(11, 3, {{0, 0}}, {{10, 2}});
  const std::vector<AgentPose> poses{{1, 1, Heading::N}, {9, 1, Heading::N}};
  const IntGrid own = voronoi_partition(k, poses, {true, true});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 11; ++x) {
      if (x == 5) CHECK(own(y, x) == 0);  // tie goes to agent 0
      else CHECK(own(y, x) == (x < 5 ? 0 : 1));
    }
  // single agent sensing only from its own pose: one partition, same as utility
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scene s = random_scene(seed, 1, 0);
    if (frontier_cells(s.known).empty()) continue;
    CHECK(plan_voronoi(s.state, s.known, s.poses, {true}, 0) == plan_utility(s.state, s.known, s.poses[0]));
  }
}

TEST_CASE("voronoi goal lies in the agent's own partition when it has frontier") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scene s = random_scene(seed, 2, 3);
    const auto f = frontier_cells(s.known);
    if (f.empty()) continue;
    const IntGrid own = voronoi_partition(s.known, s.poses, {true, true});
    for (int a = 0; a < 2; ++a) {
      bool has = false;
      for (const Cell& c : f) has = has || own(c.y, c.x) == a;
      const Cell g = plan_voronoi(s.state, s.known, s.poses, {true, true}, a);
      if (has) CHECK(own(g.y, g.x) == a);
    }
  }
}

TEST_CASE("planners are deterministic") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = random_scene(seed, 2, 2);
    if (frontier_cells(s.known).empty()) continue;
    Rng a(seed), b(seed);
    CHECK(plan_rrt(s.state, s.known, s.poses[0], {}, a) == plan_rrt(s.state, s.known, s.poses[0], {}, b));
    CHECK(plan_apf(s.state, s.known, s.poses, {true, true}, 1, {}) ==
          plan_apf(s.state, s.known, s.poses, {true, true}, 1, {}));
  }
}

TEST_CASE("planner names") {
  for (auto k : {PlannerKind::Utility, PlannerKind::Nearest, PlannerKind::Rrt, PlannerKind::Apf, PlannerKind::Voronoi})
    CHECK(planner_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(planner_from_string("dijkstra"), Error);
}
