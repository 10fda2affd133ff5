#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ax/engine.hpp"
#include "ax/metrics.hpp"
#include "ax/planner_source.hpp"
#include "ax/policy.hpp"
#include "ax/training.hpp"

namespace ax {

// Everything needed to regenerate a run. Parsed from JSON; unknown keys are rejected.
struct ExperimentConfig {
  EpisodeConfig episode;
  std::string planner = "nearest";  // utility|nearest|rrt|apf|voronoi|policy|random
  PlannerParams planner_params;
  std::string policy_checkpoint;    // stem, for planner = policy
  std::optional<std::string> map_file;
  PolicyConfig policy;              // shape for training
  TrainHyper hyper;
  std::int64_t step_max = 200000;
  int episodes_per_batch = 8;
  int eval_every = 10;
  int eval_episodes = 20;
  int checkpoint_every = 50;
  int episodes = 100;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int jobs = 1;
  // compare only: cross product of these, when present
  std::vector<std::string> planners;
  std::vector<std::string> modes;
};

ExperimentConfig experiment_from_json(const std::string& text);
std::string experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Factory for the configured decision source (planner, policy, or random goals).
SourceFactory make_source_factory(const ExperimentConfig& cfg);

struct RunOutput {
  ResultRow row;
  std::vector<EpisodeMetrics> episodes;
  std::vector<std::uint64_t> seeds;
};

// Runs the episodes. With `write`, stores episode_XXXX.jsonl, results.csv and
// config.json under out_dir.
RunOutput cmd_run(const ExperimentConfig& cfg, bool write = true);

// Throws RefusesMismatched unless the configs differ only in planner/mode.
void check_comparable(const std::vector<ExperimentConfig>& cfgs);

// Expands planners x modes and runs every cell on shared seeds. Writes
// compare.csv (results schema) and paired.csv (per-episode Time per cell).
std::vector<RunOutput> cmd_compare(const std::vector<ExperimentConfig>& cfgs, const std::filesystem::path& out_dir);

TrainResult cmd_train(const ExperimentConfig& cfg);

// ASCII frames of a JSON-lines episode log; one frame per `every` events plus the final one.
void cmd_replay(std::istream& log, std::ostream& out, int every = 1);

// Generated map as ASCII.
std::string cmd_map_gen(const ExperimentConfig& cfg);

// Frame text for one state. `explored` marks cells the team has seen.
std::string render_frame(const GridMap& map, const BoolGrid& explored, const std::vector<AgentPose>& poses,
                         const std::vector<bool>& alive);

}  // namespace ax
