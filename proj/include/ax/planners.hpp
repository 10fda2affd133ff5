#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ax/grid.hpp"
#include "ax/perception.hpp"
#include "ax/rng.hpp"

namespace ax {

enum class AtomicAction : std::uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2 };

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// 4-connected step counts over known-free cells; kUnreachable elsewhere.
IntGrid bfs_distance_map(const KnownMap& known, Cell source);

struct PathPlan {
  std::vector<AtomicAction> actions;
  double cost = 0.0;  // Seconds: forward 1.0, turn 0.5.
};

// Time-optimal (cell, heading) search through every cell that is not a known
// wall. Throws NoPath when `goal` cannot be reached.
PathPlan astar_path(const KnownMap& known, const AgentPose& start, Cell goal);

// Unexplored cells within Euclidean distance `radius` of `cell` (inclusive).
int information_gain(const BoolGrid& explored, Cell cell, double radius);

struct FrontierCluster {
  std::vector<Cell> members;  // Row-major.
  Cell center;                // Member nearest the centroid.
  int weight = 0;             // Member count.
};

// 8-connected components of `cells`, ordered by their first member.
std::vector<FrontierCluster> cluster_frontiers(const std::vector<Cell>& cells);

struct RrtParams {
  double step_len = 3.0;
  int max_iters = 300;
  int target_cap = 20;
  double ig_radius = 2.0;
  bool argmin_utility = false;  // Flip to the pseudocode's argmin of IG - N.
};

struct ApfParams {
  double influence_radius = 6.0;
  double resistance_gain = 1.0;
  double repeat_penalty = 0.5;
  int max_iters = 200;
};

struct UtilityParams {
  double ig_radius = 2.0;
};

Cell plan_utility(const ExplorationState& state, const KnownMap& known, const AgentPose& pose,
                  const UtilityParams& params = {});
Cell plan_nearest(const ExplorationState& state, const KnownMap& known, const AgentPose& pose);
Cell plan_rrt(const ExplorationState& state, const KnownMap& known, const AgentPose& pose, const RrtParams& params,
              Rng& rng);
Cell plan_apf(const ExplorationState& state, const KnownMap& known, const std::vector<AgentPose>& poses,
              const std::vector<bool>& alive, int agent, const ApfParams& params);
Cell plan_voronoi(const ExplorationState& state, const KnownMap& known, const std::vector<AgentPose>& poses,
                  const std::vector<bool>& alive, int agent, const UtilityParams& params = {});

// Owner of every known-free cell by geodesic distance; ties go to the lower
// id; -1 where no alive agent reaches.
IntGrid voronoi_partition(const KnownMap& known, const std::vector<AgentPose>& poses,
                          const std::vector<bool>& alive);

// Potential field used by plan_apf before the descent walk; +inf off known-free cells.
RealGrid apf_potential(const KnownMap& known, const std::vector<AgentPose>& poses, const std::vector<bool>& alive,
                       int agent, const std::vector<FrontierCluster>& clusters, const ApfParams& params);

namespace detail {

// RRT goal selection over cluster centers: min-max normalise both terms
// across clusters and pick the best IG - N. Ties go to the earlier cluster.
std::size_t select_rrt_cluster(const std::vector<double>& info_gain, const std::vector<double>& nav_cost,
                               bool argmin);

}  // namespace detail

enum class PlannerKind { Utility, Nearest, Rrt, Apf, Voronoi, Policy };

std::string to_string(PlannerKind kind);
PlannerKind planner_from_string(const std::string& name);

}  // namespace ax
