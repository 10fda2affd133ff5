#include "ax/perception.hpp"

#include <algorithm>
#include <cstdlib>

#include "ax/error.hpp"
#include "binary_io.hpp"

namespace ax {

ExplorationState::ExplorationState(int width, int height, int n_agents)
    : per_agent_(static_cast<std::size_t>(n_agents), BoolGrid::Constant(height, width, false)),
      merged_(BoolGrid::Constant(height, width, false)),
      trajectory_(static_cast<std::size_t>(n_agents), RealGrid::Zero(height, width)) {}

bool ExplorationState::mark(int agent, Cell c) {
  auto& mine = per_agent_[static_cast<std::size_t>(agent)];
  if (mine(c.y, c.x)) return false;
  mine(c.y, c.x) = true;
  merged_(c.y, c.x) = true;
  return true;
}

bool operator==(const ExplorationState& a, const ExplorationState& b) {
  if (a.agent_count() != b.agent_count() || a.width() != b.width() || a.height() != b.height()) return false;
  if (!(a.merged_ == b.merged_).all()) return false;
  for (int i = 0; i < a.agent_count(); ++i) {
    if (!(a.per_agent_[i] == b.per_agent_[i]).all()) return false;
    if (!(a.trajectory_[i] == b.trajectory_[i]).all()) return false;
  }
  return true;
}

bool line_of_sight(const GridMap& map, Cell from, Cell to) {
  int x = from.x;
  int y = from.y;
  const int dx = std::abs(to.x - from.x);
  const int dy = -std::abs(to.y - from.y);
  const int sx = from.x < to.x ? 1 : -1;
  const int sy = from.y < to.y ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x == to.x && y == to.y) return true;
    if (!(x == from.x && y == from.y) && !map.is_free({x, y})) return false;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

BoolGrid visible_cells(const GridMap& map, const AgentPose& pose, int fov_radius) {
  BoolGrid vis = BoolGrid::Constant(map.height(), map.width(), false);
  const Cell from = pose.cell();
  for (int y = pose.y - fov_radius; y <= pose.y + fov_radius; ++y)
    for (int x = pose.x - fov_radius; x <= pose.x + fov_radius; ++x)
      if (map.in_bounds({x, y}) && line_of_sight(map, from, {x, y})) vis(y, x) = true;
  return vis;
}

SenseResult sense(const GridMap& map, const AgentPose& pose, ExplorationState& state, int agent,
                  const SensorModel& sensor) {
  SenseResult out;
  out.overlap_increment.assign(static_cast<std::size_t>(state.agent_count()), 0);
  const BoolGrid vis = visible_cells(map, pose, sensor.fov_radius);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (!vis(y, x)) continue;
      const bool new_to_team = !state.merged()(y, x);
      if (!state.mark(agent, {x, y})) continue;
      out.newly_explored.push_back({x, y});
      if (new_to_team) {
        ++out.new_team_cells;
        ++out.new_individual_cells;
      }
      for (int w = 0; w < state.agent_count(); ++w) {
        if (w == agent || !state.explored_by(w)(y, x)) continue;
        ++out.overlap_increment[static_cast<std::size_t>(agent)];
        ++out.overlap_increment[static_cast<std::size_t>(w)];
      }
    }
  }
  return out;
}

void update_trajectory(ExplorationState& state, int agent, const AgentPose& pose, const SensorModel& sensor) {
  RealGrid& traj = state.trajectory(agent);
  traj *= sensor.trajectory_decay;
  const int r = sensor.trajectory_near - 1;
  for (int y = std::max(0, pose.y - r); y <= std::min(state.height() - 1, pose.y + r); ++y)
    for (int x = std::max(0, pose.x - r); x <= std::min(state.width() - 1, pose.x + r); ++x) traj(y, x) = 1.0;
}

CoverageDomain coverage_domain(const GridMap& map, const std::vector<Cell>& spawns) {
  CoverageDomain d;
  d.cells = reachable_free(map, spawns);
  d.size = static_cast<int>(d.cells.count());
  return d;
}

double coverage_ratio(const CoverageDomain& domain, const BoolGrid& explored) {
  if (domain.size == 0) return 1.0;
  return static_cast<double>((domain.cells && explored).count()) / domain.size;
}

KnownMap::KnownMap(const GridMap& map, const BoolGrid& explored)
    : cells_(Grid<std::uint8_t>::Zero(map.height(), map.width())) {
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (explored(y, x)) set({x, y}, map.at({x, y}) == Tile::Wall ? Knowledge::Wall : Knowledge::Free);
}

std::vector<Cell> frontier_cells(const KnownMap& known) {
  std::vector<Cell> out;
  for (int y = 0; y < known.height(); ++y) {
    for (int x = 0; x < known.width(); ++x) {
      if (!known.known_free({x, y})) continue;
      for (const Cell& s : kHeadingStep) {
        if (known.unknown({x + s.x, y + s.y})) {
          out.push_back({x, y});
          break;
        }
      }
    }
  }
  return out;
}

std::vector<Cell> frontier_cells(const ExplorationState& state, const GridMap& map) {
  return frontier_cells(KnownMap(map, state.merged()));
}

namespace {

void check_size(const GridMap& map, int size) {
  if (size < map.width() || size < map.height())
    throw Error(ErrorKind::InvalidSpec, "observation size smaller than the map");
}

void write_view(LocalInfo& li, const GridMap& map, const BoolGrid& vis) {
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (!vis(y, x)) continue;
      li.at(kViewMask, {x, y}) = 1.0;
      li.at(map.at({x, y}) == Tile::Wall ? kViewObstacle : kViewFree, {x, y}) = 1.0;
    }
  }
}

}  // namespace

LocalInfo build_local_info(const GridMap& map, const ExplorationState& state, const AgentPose& pose, int agent,
                           int size, const SensorModel& sensor) {
  check_size(map, size);
  LocalInfo li(size);
  const BoolGrid& explored = state.explored_by(agent);
  const RealGrid& traj = state.trajectory(agent);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (explored(y, x)) {
        li.at(kExplored, {x, y}) = 1.0;
        if (map.at({x, y}) == Tile::Wall) li.at(kObstacle, {x, y}) = 1.0;
      }
      li.at(kTrajectory, {x, y}) = traj(y, x);
    }
  }
  li.at(kLocation, pose.cell()) = 1.0;
  write_view(li, map, visible_cells(map, pose, sensor.fov_radius));
  return li;
}

LocalInfo build_merged_local_info(const GridMap& map, const ExplorationState& state,
                                  const std::vector<AgentPose>& poses, const std::vector<bool>& alive, int size,
                                  const SensorModel& sensor) {
  check_size(map, size);
  LocalInfo li(size);
  const BoolGrid& explored = state.merged();
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (!explored(y, x)) continue;
      li.at(kExplored, {x, y}) = 1.0;
      if (map.at({x, y}) == Tile::Wall) li.at(kObstacle, {x, y}) = 1.0;
    }
  }
  BoolGrid views = BoolGrid::Constant(map.height(), map.width(), false);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (!alive[i]) continue;
    const int a = static_cast<int>(i);
    li.at(kLocation, poses[i].cell()) = 1.0;
    const RealGrid& traj = state.trajectory(a);
    for (int y = 0; y < map.height(); ++y)
      for (int x = 0; x < map.width(); ++x)
        li.at(kTrajectory, {x, y}) = std::max(li.at(kTrajectory, {x, y}), traj(y, x));
    views = views || visible_cells(map, poses[i], sensor.fov_radius);
  }
  write_view(li, map, views);
  return li;
}

void write_local_info(std::ostream& out, const LocalInfo& info) {
  detail::write_u32_le(out, static_cast<std::uint32_t>(info.size()));
  detail::write_u32_le(out, kChannelCount);
  for (int c = 0; c < kChannelCount; ++c)
    for (Eigen::Index i = 0; i < info.data().rows(); ++i)
      detail::write_f32_le(out, static_cast<float>(info.data()(i, c)));
}

LocalInfo read_local_info(std::istream& in) {
  const auto size = detail::read_u32_le(in);
  const auto channels = detail::read_u32_le(in);
  if (channels != kChannelCount || size == 0 || size > 4096)
    throw Error(ErrorKind::Io, "bad local-info header");
  LocalInfo info(static_cast<int>(size));
  for (int c = 0; c < kChannelCount; ++c)
    for (Eigen::Index i = 0; i < info.data().rows(); ++i) info.data()(i, c) = detail::read_f32_le(in);
  return info;
}

}  // namespace ax
