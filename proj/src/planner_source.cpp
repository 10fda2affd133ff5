#include "ax/planner_source.hpp"

#include "ax/error.hpp"

namespace ax {

PlannerSource::PlannerSource(PlannerKind kind, PlannerParams params) : kind_(kind), params_(params) {
  if (kind == PlannerKind::Policy) throw Error(ErrorKind::Config, "policy is not a classical planner");
}

Decision PlannerSource::decide(const World& world, const DecisionRequest& req) {
  const AgentPose& pose = world.agents[static_cast<std::size_t>(req.agent)].pose;
  switch (kind_) {
    case PlannerKind::Utility: return {plan_utility(world.exploration, world.known, pose, params_.utility), 0};
    case PlannerKind::Nearest: return {plan_nearest(world.exploration, world.known, pose), 0};
    case PlannerKind::Rrt: {
      Rng rng(derive_seed(world.seeds.decision, static_cast<std::uint64_t>(req.agent),
                          static_cast<std::uint64_t>(req.macro_index)));
      return {plan_rrt(world.exploration, world.known, pose, params_.rrt, rng), 0};
    }
    case PlannerKind::Apf:
      return {plan_apf(world.exploration, world.known, world.poses(), world.alive(), req.agent, params_.apf), 0};
    case PlannerKind::Voronoi:
      return {plan_voronoi(world.exploration, world.known, world.poses(), world.alive(), req.agent,
                           params_.utility),
              0};
    case PlannerKind::Policy: break;
  }
  throw Error(ErrorKind::Config, "unsupported planner");
}

}  // namespace ax
