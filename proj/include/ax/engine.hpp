#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ax/grid.hpp"
#include "ax/perception.hpp"
#include "ax/planners.hpp"
#include "ax/reward.hpp"
#include "ax/rng.hpp"
#include "ax/worldgen.hpp"

namespace ax {

struct TimingModel {
  double forward_s = 1.0;
  double turn_s = 0.5;
  double inference_s = 0.1;
  double delay_step_s = 1.0;  // Length of one "execution step" of delay.
};

// Random wait, in execution steps, inserted between a macro's end and the
// next decision query.
struct DelayModel {
  int min_steps = 3;
  int max_steps = 5;
  bool enabled = false;
};

// N1 => N2 agent loss: once coverage reaches the trigger, the highest ids die
// until `surviving_n` remain.
struct LossSchedule {
  int initial_n = 0;
  int surviving_n = 0;
  double trigger_coverage = 0.5;
};

enum class ExecutionMode { Sync, Async };

std::string to_string(ExecutionMode mode);
ExecutionMode mode_from_string(const std::string& name);

struct MacroAction {
  Cell goal;
  std::vector<AtomicAction> planned_path;
  int executed_count = 0;
  int max_local_steps = 5;
  double issued_at = 0.0;
};

double atomic_duration(AtomicAction action, const TimingModel& timing);

// Uniform k in [min, max] execution steps, in seconds; 0 when disabled.
double sample_delay(const DelayModel& model, const TimingModel& timing, Rng& rng);

// Stop condition: local-step budget used, goal reached, path exhausted, or
// the remaining path runs into a known wall.
bool macro_terminated(const MacroAction& macro, const AgentPose& pose, const KnownMap& known);

struct EpisodeConfig {
  MapSpec map;                          // `map.seed` is replaced by the derived map seed.
  std::optional<GridMap> fixed_map;     // Overrides generation when set.
  std::optional<std::vector<AgentPose>> fixed_spawns;
  int n_agents = 2;
  ExecutionMode mode = ExecutionMode::Async;
  TimingModel timing;
  DelayModel delay;
  std::vector<double> injected_delay_s;  // Extra seconds per macro, per agent (fault injection).
  std::optional<LossSchedule> loss;
  SensorModel sensor;
  RewardConfig reward;
  double t_max = 100.0;
  double stop_ratio = 1.0;
  int max_local_steps = 5;
  std::uint64_t seed = 0;
};

struct EpisodeSeeds {
  std::uint64_t map = 0;
  std::uint64_t spawn = 0;
  std::uint64_t delay = 0;
  std::uint64_t decision = 0;
};

EpisodeSeeds derive_episode_seeds(std::uint64_t episode_seed);

// Default horizon for a map: 100 s up to 15x15, 250 s beyond.
double default_t_max(int width, int height);

enum class AgentPhase { Deciding, Acting, Waiting, Dead };

struct AgentState {
  AgentPose pose;
  AgentPhase phase = AgentPhase::Deciding;
  double next_event_time = 0.0;
  double ready_time = 0.0;  // Sync mode: when the post-macro delay has elapsed.
  MacroAction macro;
  int macro_index = -1;
  bool alive = true;
  Rng delay_rng;
};

// Everything a decision source may read. Owned and mutated by the Engine.
struct World {
  GridMap map;
  CoverageDomain domain;
  ExplorationState exploration;
  KnownMap known;
  std::vector<AgentState> agents;
  EpisodeSeeds seeds;
  double time = 0.0;

  int agent_count() const { return static_cast<int>(agents.size()); }
  std::vector<AgentPose> poses() const;
  std::vector<bool> alive() const;
  double coverage() const { return coverage_ratio(domain, exploration.merged()); }
};

struct RewardSample {
  int offset = 0;  // Atomic-step index inside the macro.
  double reward = 0.0;
};

struct MacroOutcome {
  int macro_index = 0;
  std::vector<RewardSample> rewards;
  int steps = 0;
};

struct DecisionRequest {
  int agent = 0;
  int macro_index = 0;                    // Index b of the macro being requested.
  double time = 0.0;
  std::optional<MacroOutcome> previous;   // Macro b-1, absent for the first decision.
};

struct FinishRequest {
  int agent = 0;
  MacroOutcome last;
  bool terminal = false;  // True when the episode ended by full coverage.
};

struct Decision {
  Cell goal;
  std::size_t comm_bytes = 0;
};

// Maps (agent, world snapshot) to a goal cell. Called strictly in event order.
class DecisionSource {
 public:
  virtual ~DecisionSource() = default;
  virtual Decision decide(const World& world, const DecisionRequest& request) = 0;
  // Called once per agent with its last, unfinished macro when the agent dies
  // or the episode ends.
  virtual void finish(const World&, const FinishRequest&) {}
};

enum class EventKind { Spawn, Decide, Step, Loss, End };
enum class Termination { Covered, TimeCap, Deadlock };

std::string to_string(EventKind kind);
std::string to_string(Termination t);

struct LogEvent {
  double t = 0.0;
  int agent = -1;
  EventKind kind = EventKind::Step;
  Cell cell;
  Heading heading = Heading::N;
  double ratio = 0.0;
  double reward = 0.0;
  std::vector<Cell> explored;       // Cells new to this agent's explored map.
  int new_team = 0;
  int new_individual = 0;
  std::vector<int> overlap;         // A_overlap per agent.
  bool success = false;             // First crossing of the success threshold.
  int macro_index = -1;
  std::size_t comm_bytes = 0;
};

struct MacroRecord {
  int agent = 0;
  int index = 0;
  double issued_at = 0.0;
  double ended_at = 0.0;
  Cell goal;
  int steps = 0;
};

struct EpisodeLog {
  std::string config_json;  // Full EpisodeConfig, embedded for replay.
  EpisodeSeeds seeds;
  GridMap map;
  std::vector<AgentPose> spawns;
  int domain_size = 0;
  std::vector<LogEvent> events;
  std::vector<MacroRecord> macros;
  double terminal_time = 0.0;
  Termination reason = Termination::TimeCap;
  double final_ratio = 0.0;
  std::optional<double> success_time;
};

struct EpisodeResult {
  EpisodeLog log;
  ExplorationState final_state;
  std::optional<ExplorationState> success_state;  // Snapshot at the first success-threshold event.
};

// Marks the highest-id alive agents dead until `surviving_n` remain. Returns
// the ids killed.
std::vector<int> apply_agent_loss(const LossSchedule& schedule, World& world);

// Discrete-event executor for one episode.
class Engine {
 public:
  Engine(const EpisodeConfig& config, DecisionSource& source);

  // Processes the globally earliest event (ties by agent id). Returns false
  // once the episode has terminated.
  bool step();

  bool done() const { return done_; }
  const World& world() const { return world_; }
  const EpisodeLog& log() const { return log_; }

  EpisodeResult take_result();

 private:
  void decide(int agent);
  void act(int agent);
  void end_macro(int agent, double t);
  void close_record(int agent, double t);
  void release_barrier();
  void kill(int agent);
  void terminate(Termination reason, double t);
  MacroOutcome take_outcome(int agent);

  EpisodeConfig config_;
  DecisionSource& source_;
  World world_;
  EpisodeLog log_;
  SuccessLatch success_;
  std::vector<std::vector<RewardSample>> macro_rewards_;
  std::vector<bool> macro_open_;  // last MacroRecord of the agent still running
  std::optional<ExplorationState> success_state_;
  bool loss_applied_ = false;
  bool done_ = false;
};

EpisodeResult run_episode(const EpisodeConfig& config, DecisionSource& source);

std::string config_to_json(const EpisodeConfig& config);
EpisodeConfig config_from_json(const std::string& json);

// JSON lines: a header record, then one record per event.
void write_log(std::ostream& out, const EpisodeLog& log);
EpisodeLog read_log(std::istream& in);

}  // namespace ax
