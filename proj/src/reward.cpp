#include "ax/reward.hpp"

namespace ax {

double coverage_reward(int new_team_cells, int new_individual_cells, const RewardConfig& cfg) {
  return cfg.team_coverage_coeff * new_team_cells + cfg.individual_coverage_coeff * new_individual_cells;
}

double success_reward(double ratio, const RewardConfig& cfg) {
  return ratio >= cfg.success_threshold / 100.0 ? ratio : 0.0;
}

double overlap_penalty(int a_overlap, double ratio, const RewardConfig& cfg) {
  if (a_overlap == 0 || ratio >= cfg.overlap_cutoff) return 0.0;
  return -static_cast<double>(a_overlap) * cfg.overlap_coeff;
}

}  // namespace ax
