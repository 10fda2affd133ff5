#pragma once

#include "ax/engine.hpp"
#include "ax/planners.hpp"

namespace ax {

struct PlannerParams {
  UtilityParams utility;
  RrtParams rrt;
  ApfParams apf;
};

// Drives the engine with one of the classical baselines over the merged team map.
class PlannerSource : public DecisionSource {
 public:
  explicit PlannerSource(PlannerKind kind, PlannerParams params = {});

  Decision decide(const World& world, const DecisionRequest& request) override;

  PlannerKind kind() const { return kind_; }

 private:
  PlannerKind kind_;
  PlannerParams params_;
};

}  // namespace ax
