#pragma once

namespace ax {

struct RewardConfig {
  double team_coverage_coeff = 0.02;        // Per cell newly explored by the team.
  double individual_coverage_coeff = 0.01;  // Per cell the acting agent contributed.
  double overlap_coeff = 0.01;
  double success_threshold = 98.0;          // C, in percent.
  double overlap_cutoff = 0.9;
};

double coverage_reward(int new_team_cells, int new_individual_cells, const RewardConfig& cfg);

// `ratio` when it meets the success threshold, else 0. Single emission per
// episode is the caller's job; see SuccessLatch.
double success_reward(double ratio, const RewardConfig& cfg);

double overlap_penalty(int a_overlap, double ratio, const RewardConfig& cfg);

// Emits the success reward on the first crossing only.
class SuccessLatch {
 public:
  double operator()(double ratio, const RewardConfig& cfg) {
    if (fired_) return 0.0;
    const double r = success_reward(ratio, cfg);
    if (r > 0.0) fired_ = true;
    return r;
  }
  bool fired() const { return fired_; }

 private:
  bool fired_ = false;
};

}  // namespace ax
