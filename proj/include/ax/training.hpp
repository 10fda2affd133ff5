#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "ax/engine.hpp"
#include "ax/metrics.hpp"
#include "ax/policy.hpp"

namespace ax {

struct TrainHyper {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double grad_clip_norm = 10.0;
  double huber_delta = 10.0;
  double adam_eps = 1e-5;
  double weight_decay = 0.0;
  double lr = 2.5e-5;
  double clip_eps = 0.2;
  int ppo_epochs = 3;
  int minibatches = 4;
  double value_coef = 1.0;
  double entropy_coef = 0.01;
  bool reward_normalization = true;
  bool feature_normalization = true;
  bool per_macro_discount = false;  // ablation: Delta_b = 1 for every macro
};

inline constexpr double kLrPresetAppendix = 2.5e-5;
inline constexpr double kLrPresetGrid = 5e-4;

// sum_t gamma^t r_t over the macro's atomic steps.
double accumulate_macro_reward(const std::vector<RewardSample>& rewards, double gamma);

struct MacroTransition {
  Policy::Sample obs;     // s_{b-1}, o_{b-1}
  int action = 0;         // goal block u_{b-1}
  Cell goal;
  double reward = 0.0;    // accumulated discounted macro reward
  int steps = 0;          // atomic steps the macro took
  double value = 0.0;
  double log_prob = 0.0;
  bool terminal = false;
  bool has_next = false;  // false for the cache's last entry; bootstrapped from `bootstrap`
  double bootstrap = 0.0;
  int agent = 0;
  int episode = 0;
  int index = 0;
};

using TransitionCache = std::vector<MacroTransition>;

void cache_push(TransitionCache& cache, MacroTransition t);

struct ReplayBuffer {
  std::vector<MacroTransition> items;
  std::vector<std::size_t> segment_starts;  // one segment per flushed cache
  std::vector<double> advantages;
  std::vector<double> returns;
  int incomplete = 0;  // caches whose last entry had to bootstrap

  std::size_t size() const { return items.size(); }
};

// Moves every cached transition into `buffer`, agent by agent, and empties the caches.
void flush_caches(std::vector<TransitionCache>& caches, ReplayBuffer& buffer);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_b = R_b + gamma^D_b V_{b+1} - V_b, A_b = delta_b + (gamma lambda)^D_b A_{b+1}.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<int>& steps, double gamma, double lambda, double bootstrap_value);

// Running standard deviation of macro rewards; scales without shifting.
class RewardScaler {
 public:
  void update(double r);
  double scale(double r) const;
  double count() const { return n_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  void set(double n, double mean, double m2) { n_ = n, mean_ = mean, m2_ = m2; }

 private:
  double n_ = 0.0, mean_ = 0.0, m2_ = 0.0;
};

// Fills advantages (normalised) and returns for every segment of `buffer`.
void compute_advantages(ReplayBuffer& buffer, const TrainHyper& hyper, RewardScaler* scaler);

struct Adam {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr, double eps, double weight_decay = 0.0);
};

struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

// Clipped-surrogate + Huber value + entropy loss averaged over `idx`. Writes the
// gradient into `grad` when given.
template <typename Scalar>
Scalar ppo_loss(const McpPolicy<Scalar>& policy, const ReplayBuffer& buffer, const std::vector<std::size_t>& idx,
                const TrainHyper& hyper, typename McpPolicy<Scalar>::Vec* grad = nullptr,
                LossReport* report = nullptr);

// Runs the PPO epochs. Throws NonFiniteLoss and restores params/optimizer when
// any loss or gradient is not finite.
LossReport ppo_update(Policy& policy, Adam& adam, const ReplayBuffer& buffer, const TrainHyper& hyper, Rng& rng);

// Builds the goal from a goal-grid block: the block's frontier cell nearest its
// center when one exists, else the clamped block center.
Cell refine_goal(const World& world, int block, const PolicyConfig& cfg);

// Policy-driven decisions, optionally recording Algorithm-1 style caches.
class PolicySource : public DecisionSource {
 public:
  PolicySource(const Policy& policy, const FeatureNormalizer& normalizer, const TrainHyper& hyper, bool collect,
               int episode = 0);

  Decision decide(const World& world, const DecisionRequest& request) override;
  void finish(const World& world, const FinishRequest& request) override;

  std::vector<TransitionCache>& caches() { return caches_; }
  // Raw pooled statistics seen during this episode (own observations).
  const FeatureNormalizer& observed() const { return observed_; }

 private:
  Policy::Sample observe(const World& world, int agent, const PolicyConfig& cfg);
  void close_pending(int agent, const MacroOutcome& outcome, bool terminal, std::optional<double> next_value);

  const Policy& policy_;
  const FeatureNormalizer& normalizer_;
  TrainHyper hyper_;
  bool collect_;
  int episode_;
  std::vector<TransitionCache> caches_;
  std::vector<std::optional<MacroTransition>> pending_;
  FeatureNormalizer observed_;
};

// Uniform random goal block, refined like the policy's goals.
class RandomGoalSource : public DecisionSource {
 public:
  explicit RandomGoalSource(PolicyConfig cfg) : cfg_(cfg) {}
  Decision decide(const World& world, const DecisionRequest& request) override;

 private:
  PolicyConfig cfg_;
};

using SourceFactory = std::function<std::unique_ptr<DecisionSource>(int episode)>;

// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// Episodes with seeds derive_seed(seed, 0, i); results ordered by index.
std::vector<EpisodeResult> run_episodes(const EpisodeConfig& base, int episodes, std::uint64_t seed,
                                        const SourceFactory& factory, int jobs);

struct TrainConfig {
  EpisodeConfig episode;
  PolicyConfig policy;
  TrainHyper hyper;
  std::int64_t step_max = 200000;  // macro transitions
  int episodes_per_batch = 8;
  int eval_every = 10;             // batches
  int eval_episodes = 20;
  int checkpoint_every = 50;       // batches; 0 disables intermediate checkpoints
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct CurveRow {
  int batch = 0;
  std::int64_t steps = 0;
  double mean_time = 0.0;
  double mean_acs = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

inline constexpr const char* kCurvesHeader =
    "batch,steps,mean_time,mean_acs,policy_loss,value_loss,entropy,grad_norm";

void write_curves_csv(std::ostream& out, const std::vector<CurveRow>& rows, bool header = true);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<CurveRow> curves;
};

// Async-MAPPO. Writes `policy.*`, `curves.csv` and periodic `ckpt_<batch>.*`
// into `out_dir` when it is non-empty.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir = {},
                  const std::optional<Checkpoint>& resume = std::nullopt);

// Stochastic evaluation of a checkpoint on `base`.
std::vector<EpisodeMetrics> evaluate_policy(const Checkpoint& ck, const EpisodeConfig& base, int episodes,
                                            std::uint64_t seed, int jobs);

}  // namespace ax
