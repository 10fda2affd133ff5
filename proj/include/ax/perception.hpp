#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ax/grid.hpp"

namespace ax {

struct SensorModel {
  int fov_radius = 2;              // Chebyshev radius of the square field of view.
  double trajectory_decay = 0.9;   // Per-step multiplier for trajectory cells not near the agent.
  int trajectory_near = 3;         // Cells at Chebyshev distance < this are "near".
};

// Per-agent and merged explored sets plus per-agent trajectory traces.
class ExplorationState {
 public:
  ExplorationState() = default;
  ExplorationState(int width, int height, int n_agents);

  int width() const { return static_cast<int>(merged_.cols()); }
  int height() const { return static_cast<int>(merged_.rows()); }
  int agent_count() const { return static_cast<int>(per_agent_.size()); }

  const BoolGrid& merged() const { return merged_; }
  const BoolGrid& explored_by(int agent) const { return per_agent_[static_cast<std::size_t>(agent)]; }
  const RealGrid& trajectory(int agent) const { return trajectory_[static_cast<std::size_t>(agent)]; }
  RealGrid& trajectory(int agent) { return trajectory_[static_cast<std::size_t>(agent)]; }

  // Marks `c` explored by `agent`. Returns true when the cell is new to that agent.
  bool mark(int agent, Cell c);

  friend bool operator==(const ExplorationState& a, const ExplorationState& b);

 private:
  std::vector<BoolGrid> per_agent_;
  BoolGrid merged_;
  std::vector<RealGrid> trajectory_;
};

struct SenseResult {
  std::vector<Cell> newly_explored;   // New to the sensing agent, row-major.
  int new_team_cells = 0;             // |Exp^t \ Exp^{t-1}|
  int new_individual_cells = 0;       // |Exp_a^t \ Exp^{t-1}| for the sensing agent.
  std::vector<int> overlap_increment; // A_overlap for every agent (index = agent id).
};

// Integer ray cast: every cell strictly between `from` and `to` on the
// Bresenham line must be free. Endpoints are not tested.
bool line_of_sight(const GridMap& map, Cell from, Cell to);

// Cells within the Chebyshev field of view that pass the ray-cast test.
BoolGrid visible_cells(const GridMap& map, const AgentPose& pose, int fov_radius);

SenseResult sense(const GridMap& map, const AgentPose& pose, ExplorationState& state, int agent,
                  const SensorModel& sensor = {});

void update_trajectory(ExplorationState& state, int agent, const AgentPose& pose,
                       const SensorModel& sensor = {});

// Cells that count toward the coverage ratio: free cells reachable from the spawns.
struct CoverageDomain {
  BoolGrid cells;
  int size = 0;
};

CoverageDomain coverage_domain(const GridMap& map, const std::vector<Cell>& spawns);
double coverage_ratio(const CoverageDomain& domain, const BoolGrid& explored);

enum class Knowledge : std::uint8_t { Unknown = 0, Free = 1, Wall = 2 };

// What the team knows about the map: explored cells carry their tile, the
// rest are Unknown.
class KnownMap {
 public:
  KnownMap() = default;
  KnownMap(const GridMap& map, const BoolGrid& explored);

  int width() const { return static_cast<int>(cells_.cols()); }
  int height() const { return static_cast<int>(cells_.rows()); }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width() && c.y < height(); }
  Knowledge at(Cell c) const { return static_cast<Knowledge>(cells_(c.y, c.x)); }
  void set(Cell c, Knowledge k) { cells_(c.y, c.x) = static_cast<std::uint8_t>(k); }

  bool known_free(Cell c) const { return in_bounds(c) && at(c) == Knowledge::Free; }
  bool known_wall(Cell c) const { return in_bounds(c) && at(c) == Knowledge::Wall; }
  bool unknown(Cell c) const { return in_bounds(c) && at(c) == Knowledge::Unknown; }
  // Passable for global routing: anything in bounds that is not a known wall.
  bool traversable(Cell c) const { return in_bounds(c) && at(c) != Knowledge::Wall; }

 private:
  Grid<std::uint8_t> cells_;
};

// Explored free cells 4-adjacent to at least one unexplored in-bounds cell, row-major.
std::vector<Cell> frontier_cells(const KnownMap& known);
std::vector<Cell> frontier_cells(const ExplorationState& state, const GridMap& map);

enum Channel : int {
  kObstacle = 0,
  kExplored = 1,
  kLocation = 2,
  kTrajectory = 3,
  kViewMask = 4,
  kViewObstacle = 5,
  kViewFree = 6,
  kChannelCount = 7,
};

// S x S x 7 observation. Storage is channel-major, cells row-major inside
// each channel; cells outside the map are zero padding.
class LocalInfo {
 public:
  using Storage = Eigen::Array<double, Eigen::Dynamic, kChannelCount>;

  LocalInfo() = default;
  explicit LocalInfo(int size) : size_(size), data_(Storage::Zero(size * size, kChannelCount)) {}

  int size() const { return size_; }
  const Storage& data() const { return data_; }
  Storage& data() { return data_; }

  double at(int channel, Cell c) const { return data_(c.y * size_ + c.x, channel); }
  double& at(int channel, Cell c) { return data_(c.y * size_ + c.x, channel); }

  Eigen::Map<const RealGrid> channel(int c) const { return {data_.col(c).data(), size_, size_}; }

  friend bool operator==(const LocalInfo& a, const LocalInfo& b) {
    return a.size_ == b.size_ && (a.data_ == b.data_).all();
  }

 private:
  int size_ = 0;
  Storage data_;
};

// Observation from one agent's own explored map. `size` must cover the map.
LocalInfo build_local_info(const GridMap& map, const ExplorationState& state, const AgentPose& pose,
                           int agent, int size, const SensorModel& sensor = {});

// Team-merged observation: union explored/obstacle channels, multi-hot
// locations, elementwise max trajectory, union of current views. Agents with
// `alive[i] == false` are omitted.
LocalInfo build_merged_local_info(const GridMap& map, const ExplorationState& state,
                                  const std::vector<AgentPose>& poses, const std::vector<bool>& alive,
                                  int size, const SensorModel& sensor = {});

// Little-endian: uint32 S, uint32 channel count, then S*S*7 float32 channel-major.
void write_local_info(std::ostream& out, const LocalInfo& info);
LocalInfo read_local_info(std::istream& in);

}  // namespace ax
