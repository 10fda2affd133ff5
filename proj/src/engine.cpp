#include "ax/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "ax/error.hpp"

namespace ax {

std::string to_string(ExecutionMode mode) { return mode == ExecutionMode::Sync ? "sync" : "async"; }

ExecutionMode mode_from_string(const std::string& name) {
  if (name == "sync") return ExecutionMode::Sync;
  if (name == "async") return ExecutionMode::Async;
  throw Error(ErrorKind::Config, "unknown mode '" + name + "'");
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Spawn: return "spawn";
    case EventKind::Decide: return "decide";
    case EventKind::Step: return "step";
    case EventKind::Loss: return "loss";
    case EventKind::End: return "end";
  }
  return "unknown";
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Covered: return "covered";
    case Termination::TimeCap: return "time_cap";
    case Termination::Deadlock: return "deadlock";
  }
  return "unknown";
}

double atomic_duration(AtomicAction action, const TimingModel& timing) {
  return action == AtomicAction::Forward ? timing.forward_s : timing.turn_s;
}

double sample_delay(const DelayModel& model, const TimingModel& timing, Rng& rng) {
  if (!model.enabled) return 0.0;
  return uniform_int(rng, model.min_steps, model.max_steps) * timing.delay_step_s;
}

bool macro_terminated(const MacroAction& macro, const AgentPose& pose, const KnownMap& known) {
  if (macro.executed_count >= macro.max_local_steps) return true;
  if (pose.cell() == macro.goal) return true;
  const auto total = static_cast<int>(macro.planned_path.size());
  if (macro.executed_count >= total) return true;
  AgentPose p = pose;
  for (int i = macro.executed_count; i < total; ++i) {
    switch (macro.planned_path[static_cast<std::size_t>(i)]) {
      case AtomicAction::TurnLeft: p.heading = turn_left(p.heading); break;
      case AtomicAction::TurnRight: p.heading = turn_right(p.heading); break;
      case AtomicAction::Forward: {
        const Cell next = step(p.cell(), p.heading);
        if (!known.traversable(next)) return true;
        p.x = next.x;
        p.y = next.y;
        break;
      }
    }
  }
  return false;
}

EpisodeSeeds derive_episode_seeds(std::uint64_t episode_seed) {
  return {derive_seed(episode_seed, 1), derive_seed(episode_seed, 2), derive_seed(episode_seed, 3),
          derive_seed(episode_seed, 4)};
}

double default_t_max(int width, int height) { return std::max(width, height) <= 15 ? 100.0 : 250.0; }

std::vector<AgentPose> World::poses() const {
  std::vector<AgentPose> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.pose);
  return out;
}

std::vector<bool> World::alive() const {
  std::vector<bool> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.alive);
  return out;
}

std::vector<int> apply_agent_loss(const LossSchedule& schedule, World& world) {
  std::vector<int> killed;
  int alive = static_cast<int>(std::count_if(world.agents.begin(), world.agents.end(),
                                             [](const AgentState& a) { return a.alive; }));
  for (int i = world.agent_count() - 1; i >= 0 && alive > schedule.surviving_n; --i) {
    auto& a = world.agents[static_cast<std::size_t>(i)];
    if (!a.alive) continue;
    a.alive = false;
    a.phase = AgentPhase::Dead;
    killed.push_back(i);
    --alive;
  }
  return killed;
}

namespace {

// Nearest (Euclidean, then row-major) cell to `goal` that the agent can route to.
Cell nearest_routable(const KnownMap& known, Cell from, Cell goal) {
  BoolGrid seen = BoolGrid::Constant(known.height(), known.width(), false);
  std::deque<Cell> queue{from};
  seen(from.y, from.x) = true;
  Cell best = from;
  auto d2 = [goal](Cell c) { return (c.x - goal.x) * (c.x - goal.x) + (c.y - goal.y) * (c.y - goal.y); };
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    if (d2(c) < d2(best) || (d2(c) == d2(best) && RowMajorLess{}(c, best))) best = c;
    for (const Cell& s : kHeadingStep) {
      const Cell n{c.x + s.x, c.y + s.y};
      if (known.traversable(n) && !seen(n.y, n.x)) {
        seen(n.y, n.x) = true;
        queue.push_back(n);
      }
    }
  }
  return best;
}

}  // namespace

Engine::Engine(const EpisodeConfig& config, DecisionSource& source) : config_(config), source_(source) {
  if (config_.n_agents < 1) throw Error(ErrorKind::Config, "need at least one agent");
  if (config_.loss && config_.loss->surviving_n > config_.n_agents)
    throw Error(ErrorKind::Config, "loss schedule keeps more agents than exist");

  world_.seeds = derive_episode_seeds(config_.seed);
  if (config_.fixed_map) {
    world_.map = *config_.fixed_map;
  } else {
    MapSpec spec = config_.map;
    spec.seed = world_.seeds.map;
    world_.map = generate_map(spec);
  }
  std::vector<AgentPose> spawns = config_.fixed_spawns ? *config_.fixed_spawns
                                                       : spawn_agents(world_.map, config_.n_agents, world_.seeds.spawn);
  if (static_cast<int>(spawns.size()) != config_.n_agents)
    throw Error(ErrorKind::Config, "spawn list does not match agent count");

  std::vector<Cell> spawn_cells;
  for (const auto& p : spawns) spawn_cells.push_back(p.cell());
  world_.domain = coverage_domain(world_.map, spawn_cells);
  world_.exploration = ExplorationState(world_.map.width(), world_.map.height(), config_.n_agents);
  world_.known = KnownMap(world_.map, world_.exploration.merged());
  macro_rewards_.resize(static_cast<std::size_t>(config_.n_agents));
  macro_open_.assign(static_cast<std::size_t>(config_.n_agents), false);

  log_.config_json = config_to_json(config_);
  log_.seeds = world_.seeds;
  log_.map = world_.map;
  log_.spawns = spawns;
  log_.domain_size = world_.domain.size;

  for (int i = 0; i < config_.n_agents; ++i) {
    AgentState a;
    a.pose = spawns[static_cast<std::size_t>(i)];
    a.delay_rng = Rng(derive_seed(world_.seeds.delay, static_cast<std::uint64_t>(i)));
    a.phase = AgentPhase::Deciding;
    a.next_event_time = config_.timing.inference_s;
    world_.agents.push_back(std::move(a));
  }
  for (int i = 0; i < config_.n_agents; ++i) {
    const AgentPose& pose = world_.agents[static_cast<std::size_t>(i)].pose;
    SenseResult s = sense(world_.map, pose, world_.exploration, i, config_.sensor);
    update_trajectory(world_.exploration, i, pose, config_.sensor);
    for (const Cell& c : s.newly_explored)
      world_.known.set(c, world_.map.at(c) == Tile::Wall ? Knowledge::Wall : Knowledge::Free);
    LogEvent ev;
    ev.t = 0.0;
    ev.agent = i;
    ev.kind = EventKind::Spawn;
    ev.cell = pose.cell();
    ev.heading = pose.heading;
    ev.ratio = world_.coverage();
    ev.explored = std::move(s.newly_explored);
    ev.new_team = s.new_team_cells;
    ev.new_individual = s.new_individual_cells;
    ev.overlap = std::move(s.overlap_increment);
    log_.events.push_back(std::move(ev));
  }
  if (world_.coverage() >= config_.stop_ratio) terminate(Termination::Covered, 0.0);
}

bool Engine::step() {
  if (done_) return false;
  int next = -1;
  for (int i = 0; i < world_.agent_count(); ++i) {
    const auto& a = world_.agents[static_cast<std::size_t>(i)];
    if (!a.alive || (a.phase != AgentPhase::Deciding && a.phase != AgentPhase::Acting)) continue;
    if (next < 0 || a.next_event_time < world_.agents[static_cast<std::size_t>(next)].next_event_time) next = i;
  }
  if (next < 0) {
    terminate(Termination::Deadlock, world_.time);
    return false;
  }
  auto& a = world_.agents[static_cast<std::size_t>(next)];
  if (a.next_event_time > config_.t_max) {
    terminate(Termination::TimeCap, config_.t_max);
    return false;
  }
  world_.time = a.next_event_time;
  try {
    if (a.phase == AgentPhase::Deciding) decide(next);
    else act(next);
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    throw Error(e.kind(), "agent " + std::to_string(next) + " at t=" + std::to_string(world_.time) + ": " + msg);
  }
  return !done_;
}

void Engine::decide(int agent) {
  auto& a = world_.agents[static_cast<std::size_t>(agent)];
  const double t = world_.time;
  DecisionRequest req;
  req.agent = agent;
  req.macro_index = a.macro_index + 1;
  req.time = t;
  if (a.macro_index >= 0) req.previous = take_outcome(agent);

  const Decision d = source_.decide(world_, req);
  if (!world_.map.in_bounds(d.goal)) throw Error(ErrorKind::NoPath, "decision outside the map");

  Cell target = d.goal;
  PathPlan plan;
  try {
    plan = astar_path(world_.known, a.pose, target);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoPath) throw;
    target = nearest_routable(world_.known, a.pose.cell(), d.goal);
    plan = astar_path(world_.known, a.pose, target);
  }
  if (static_cast<int>(plan.actions.size()) > config_.max_local_steps)
    plan.actions.resize(static_cast<std::size_t>(config_.max_local_steps));

  a.macro_index = req.macro_index;
  a.macro = MacroAction{target, std::move(plan.actions), 0, config_.max_local_steps, t};

  LogEvent ev;
  ev.t = t;
  ev.agent = agent;
  ev.kind = EventKind::Decide;
  ev.cell = d.goal;
  ev.heading = a.pose.heading;
  ev.ratio = world_.coverage();
  ev.macro_index = a.macro_index;
  ev.comm_bytes = d.comm_bytes;
  log_.events.push_back(std::move(ev));
  log_.macros.push_back({agent, a.macro_index, t, t, target, 0});
  macro_open_[static_cast<std::size_t>(agent)] = true;

  if (macro_terminated(a.macro, a.pose, world_.known)) {
    end_macro(agent, t);
    return;
  }
  a.phase = AgentPhase::Acting;
  a.next_event_time = t + atomic_duration(a.macro.planned_path.front(), config_.timing);
}

void Engine::act(int agent) {
  auto& a = world_.agents[static_cast<std::size_t>(agent)];
  const double t = world_.time;
  const AtomicAction action = a.macro.planned_path[static_cast<std::size_t>(a.macro.executed_count)];
  switch (action) {
    case AtomicAction::TurnLeft: a.pose.heading = turn_left(a.pose.heading); break;
    case AtomicAction::TurnRight: a.pose.heading = turn_right(a.pose.heading); break;
    case AtomicAction::Forward: {
      const Cell next = ax::step(a.pose.cell(), a.pose.heading);
      if (world_.map.is_free(next)) {
        a.pose.x = next.x;
        a.pose.y = next.y;
      }
      break;
    }
  }
  const int offset = a.macro.executed_count;
  ++a.macro.executed_count;

  SenseResult s = sense(world_.map, a.pose, world_.exploration, agent, config_.sensor);
  update_trajectory(world_.exploration, agent, a.pose, config_.sensor);
  for (const Cell& c : s.newly_explored)
    world_.known.set(c, world_.map.at(c) == Tile::Wall ? Knowledge::Wall : Knowledge::Free);

  const double ratio = world_.coverage();
  double reward = coverage_reward(s.new_team_cells, s.new_individual_cells, config_.reward);
  const double success = success_(ratio, config_.reward);
  reward += success;
  for (int v : s.overlap_increment) reward += overlap_penalty(v, ratio, config_.reward);
  // Shared team reward: every alive agent banks it against its current macro.
  for (int j = 0; j < world_.agent_count(); ++j) {
    const auto& other = world_.agents[static_cast<std::size_t>(j)];
    if (!other.alive || other.macro_index < 0) continue;
    macro_rewards_[static_cast<std::size_t>(j)].push_back({j == agent ? offset : other.macro.executed_count, reward});
  }

  LogEvent ev;
  ev.t = t;
  ev.agent = agent;
  ev.kind = EventKind::Step;
  ev.cell = a.pose.cell();
  ev.heading = a.pose.heading;
  ev.ratio = ratio;
  ev.reward = reward;
  ev.explored = std::move(s.newly_explored);
  ev.new_team = s.new_team_cells;
  ev.new_individual = s.new_individual_cells;
  ev.overlap = std::move(s.overlap_increment);
  ev.success = success > 0.0;
  ev.macro_index = a.macro_index;
  log_.events.push_back(std::move(ev));
  if (success > 0.0) {
    log_.success_time = t;
    success_state_ = world_.exploration;
  }

  if (config_.loss && !loss_applied_ && ratio >= config_.loss->trigger_coverage) {
    loss_applied_ = true;
    for (int id : apply_agent_loss(*config_.loss, world_)) kill(id);
  }
  if (ratio >= config_.stop_ratio) {
    terminate(Termination::Covered, t);
    return;
  }
  if (!a.alive) return;
  if (macro_terminated(a.macro, a.pose, world_.known)) {
    end_macro(agent, t);
  } else {
    a.next_event_time =
        t + atomic_duration(a.macro.planned_path[static_cast<std::size_t>(a.macro.executed_count)], config_.timing);
  }
  if (config_.mode == ExecutionMode::Sync) release_barrier();
}

void Engine::close_record(int agent, double t) {
  if (!macro_open_[static_cast<std::size_t>(agent)]) return;
  macro_open_[static_cast<std::size_t>(agent)] = false;
  const auto& a = world_.agents[static_cast<std::size_t>(agent)];
  for (auto it = log_.macros.rbegin(); it != log_.macros.rend(); ++it) {
    if (it->agent == agent && it->index == a.macro_index) {
      it->ended_at = t;
      it->steps = a.macro.executed_count;
      break;
    }
  }
}

void Engine::end_macro(int agent, double t) {
  auto& a = world_.agents[static_cast<std::size_t>(agent)];
  close_record(agent, t);
  double delay = sample_delay(config_.delay, config_.timing, a.delay_rng);
  if (static_cast<std::size_t>(agent) < config_.injected_delay_s.size())
    delay += config_.injected_delay_s[static_cast<std::size_t>(agent)];
  if (config_.mode == ExecutionMode::Async) {
    a.phase = AgentPhase::Deciding;
    a.next_event_time = t + delay + config_.timing.inference_s;
  } else {
    a.phase = AgentPhase::Waiting;
    a.ready_time = t + delay;
    release_barrier();
  }
}

void Engine::release_barrier() {
  double release = -1.0;
  for (const auto& a : world_.agents) {
    if (!a.alive) continue;
    if (a.phase != AgentPhase::Waiting) return;
    release = std::max(release, a.ready_time);
  }
  if (release < 0.0) return;
  for (auto& a : world_.agents) {
    if (!a.alive) continue;
    a.phase = AgentPhase::Deciding;
    a.next_event_time = release + config_.timing.inference_s;
  }
}

MacroOutcome Engine::take_outcome(int agent) {
  const auto& a = world_.agents[static_cast<std::size_t>(agent)];
  MacroOutcome out;
  out.macro_index = a.macro_index;
  out.rewards = std::move(macro_rewards_[static_cast<std::size_t>(agent)]);
  out.steps = a.macro.executed_count;
  macro_rewards_[static_cast<std::size_t>(agent)].clear();
  return out;
}

void Engine::kill(int agent) {
  auto& a = world_.agents[static_cast<std::size_t>(agent)];
  LogEvent ev;
  ev.t = world_.time;
  ev.agent = agent;
  ev.kind = EventKind::Loss;
  ev.cell = a.pose.cell();
  ev.heading = a.pose.heading;
  ev.ratio = world_.coverage();
  log_.events.push_back(std::move(ev));
  close_record(agent, world_.time);
  if (a.macro_index >= 0) source_.finish(world_, {agent, take_outcome(agent), false});
  if (config_.mode == ExecutionMode::Sync) release_barrier();
}

void Engine::terminate(Termination reason, double t) {
  done_ = true;
  log_.reason = reason;
  log_.terminal_time = t;
  log_.final_ratio = world_.coverage();
  LogEvent ev;
  ev.t = t;
  ev.agent = -1;
  ev.kind = EventKind::End;
  ev.ratio = log_.final_ratio;
  log_.events.push_back(std::move(ev));
  for (int i = 0; i < world_.agent_count(); ++i) {
    const auto& a = world_.agents[static_cast<std::size_t>(i)];
    if (a.alive) close_record(i, t);
    if (a.alive && a.macro_index >= 0)
      source_.finish(world_, {i, take_outcome(i), reason == Termination::Covered});
  }
}

EpisodeResult Engine::take_result() {
  return {std::move(log_), std::move(world_.exploration), std::move(success_state_)};
}

EpisodeResult run_episode(const EpisodeConfig& config, DecisionSource& source) {
  Engine engine(config, source);
  while (engine.step()) {
  }
  return engine.take_result();
}

}  // namespace ax
