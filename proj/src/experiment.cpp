#include "ax/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ax/error.hpp"

namespace ax {

using nlohmann::json;

namespace {

const std::set<std::string> kEpisodeKeys = {"map",    "fixed_map", "fixed_spawns", "n_agents", "mode",
                                            "timing", "delay",     "injected_delay_s", "loss", "sensor",
                                            "reward", "t_max",     "stop_ratio",   "max_local_steps"};
const std::set<std::string> kExperimentKeys = {"planner",  "planner_params", "policy_checkpoint", "map_file",
                                               "policy",   "train",          "episodes",          "seed",
                                               "out_dir",  "jobs",           "planners",          "modes"};

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw Error(ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
}

std::string map_size(const EpisodeConfig& c) {
  const int w = c.fixed_map ? c.fixed_map->width() : c.map.width;
  const int h = c.fixed_map ? c.fixed_map->height() : c.map.height;
  return std::to_string(w) + "x" + std::to_string(h);
}

}  // namespace

ExperimentConfig experiment_from_json(const std::string& text) {
  ExperimentConfig cfg;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
    std::set<std::string> allowed = kEpisodeKeys;
    allowed.insert(kExperimentKeys.begin(), kExperimentKeys.end());
    check_keys(j, allowed, "config");

    json episode = json::object();
    for (const auto& k : kEpisodeKeys)
      if (j.contains(k)) episode[k] = j.at(k);
    cfg.episode = config_from_json(episode.dump());

    read_opt(j, "planner", cfg.planner);
    if (j.contains("planner_params")) {
      const json& p = j.at("planner_params");
      check_keys(p, {"ig_radius", "step_len", "max_iters", "target_cap", "argmin_utility", "influence_radius",
                     "resistance_gain", "repeat_penalty", "apf_max_iters"},
                 "planner_params");
      read_opt(p, "ig_radius", cfg.planner_params.utility.ig_radius);
      cfg.planner_params.rrt.ig_radius = cfg.planner_params.utility.ig_radius;
      read_opt(p, "step_len", cfg.planner_params.rrt.step_len);
      read_opt(p, "max_iters", cfg.planner_params.rrt.max_iters);
      read_opt(p, "target_cap", cfg.planner_params.rrt.target_cap);
      read_opt(p, "argmin_utility", cfg.planner_params.rrt.argmin_utility);
      read_opt(p, "influence_radius", cfg.planner_params.apf.influence_radius);
      read_opt(p, "resistance_gain", cfg.planner_params.apf.resistance_gain);
      read_opt(p, "repeat_penalty", cfg.planner_params.apf.repeat_penalty);
      read_opt(p, "apf_max_iters", cfg.planner_params.apf.max_iters);
    }
    read_opt(j, "policy_checkpoint", cfg.policy_checkpoint);
    if (j.contains("map_file")) cfg.map_file = j.at("map_file").get<std::string>();
    if (j.contains("policy")) {
      const json& p = j.at("policy");
      check_keys(p, {"G", "channels_out", "hidden", "kernel_radius", "comm"}, "policy");
      read_opt(p, "G", cfg.policy.G);
      read_opt(p, "channels_out", cfg.policy.channels_out);
      read_opt(p, "hidden", cfg.policy.hidden);
      read_opt(p, "kernel_radius", cfg.policy.kernel_radius);
      if (p.contains("comm")) cfg.policy.comm = comm_from_string(p.at("comm").get<std::string>());
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t,
                 {"gamma", "gae_lambda", "grad_clip_norm", "huber_delta", "adam_eps", "weight_decay", "lr",
                  "lr_preset", "clip_eps", "ppo_epochs", "minibatches", "value_coef", "entropy_coef",
                  "reward_normalization", "feature_normalization", "per_macro_discount", "step_max",
                  "episodes_per_batch", "eval_every", "eval_episodes", "checkpoint_every"},
                 "train");
      TrainHyper& h = cfg.hyper;
      read_opt(t, "gamma", h.gamma);
      read_opt(t, "gae_lambda", h.gae_lambda);
      read_opt(t, "grad_clip_norm", h.grad_clip_norm);
      read_opt(t, "huber_delta", h.huber_delta);
      read_opt(t, "adam_eps", h.adam_eps);
      read_opt(t, "weight_decay", h.weight_decay);
      if (t.contains("lr_preset")) {
        const auto preset = t.at("lr_preset").get<std::string>();
        if (preset == "appendix") h.lr = kLrPresetAppendix;
        else if (preset == "grid") h.lr = kLrPresetGrid;
        else throw Error(ErrorKind::Config, "unknown lr_preset '" + preset + "'");
      }
      read_opt(t, "lr", h.lr);
      read_opt(t, "clip_eps", h.clip_eps);
      read_opt(t, "ppo_epochs", h.ppo_epochs);
      read_opt(t, "minibatches", h.minibatches);
      read_opt(t, "value_coef", h.value_coef);
      read_opt(t, "entropy_coef", h.entropy_coef);
      read_opt(t, "reward_normalization", h.reward_normalization);
      read_opt(t, "feature_normalization", h.feature_normalization);
      read_opt(t, "per_macro_discount", h.per_macro_discount);
      read_opt(t, "step_max", cfg.step_max);
      read_opt(t, "episodes_per_batch", cfg.episodes_per_batch);
      read_opt(t, "eval_every", cfg.eval_every);
      read_opt(t, "eval_episodes", cfg.eval_episodes);
      read_opt(t, "checkpoint_every", cfg.checkpoint_every);
      if (!(h.gamma > 0 && h.gamma <= 1 && h.gae_lambda > 0 && h.gae_lambda <= 1))
        throw Error(ErrorKind::Config, "gamma and gae_lambda must lie in (0, 1]");
    }
    read_opt(j, "episodes", cfg.episodes);
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "out_dir", cfg.out_dir);
    read_opt(j, "jobs", cfg.jobs);
    read_opt(j, "planners", cfg.planners);
    read_opt(j, "modes", cfg.modes);

    if (cfg.map_file) cfg.episode.fixed_map = load_map(*cfg.map_file);
    if (!j.contains("t_max")) {
      const int w = cfg.episode.fixed_map ? cfg.episode.fixed_map->width() : cfg.episode.map.width;
      const int h = cfg.episode.fixed_map ? cfg.episode.fixed_map->height() : cfg.episode.map.height;
      cfg.episode.t_max = default_t_max(w, h);
    }
    if (cfg.episode.loss && cfg.episode.loss->initial_n == 0) cfg.episode.loss->initial_n = cfg.episode.n_agents;
    if (cfg.episodes < 1) throw Error(ErrorKind::Config, "episodes must be positive");
    if (cfg.planner != "policy" && cfg.planner != "random") planner_from_string(cfg.planner);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  return cfg;
}

std::string experiment_to_json(const ExperimentConfig& cfg) {
  json j = json::parse(config_to_json(cfg.episode));
  j.erase("seed");
  if (cfg.map_file) {
    j.erase("fixed_map");
    j["map_file"] = *cfg.map_file;
  }
  j["planner"] = cfg.planner;
  const auto& p = cfg.planner_params;
  j["planner_params"] = {{"ig_radius", p.utility.ig_radius},
                         {"step_len", p.rrt.step_len},
                         {"max_iters", p.rrt.max_iters},
                         {"target_cap", p.rrt.target_cap},
                         {"argmin_utility", p.rrt.argmin_utility},
                         {"influence_radius", p.apf.influence_radius},
                         {"resistance_gain", p.apf.resistance_gain},
                         {"repeat_penalty", p.apf.repeat_penalty},
                         {"apf_max_iters", p.apf.max_iters}};
  if (!cfg.policy_checkpoint.empty()) j["policy_checkpoint"] = cfg.policy_checkpoint;
  j["policy"] = {{"G", cfg.policy.G},
                 {"channels_out", cfg.policy.channels_out},
                 {"hidden", cfg.policy.hidden},
                 {"kernel_radius", cfg.policy.kernel_radius},
                 {"comm", to_string(cfg.policy.comm)}};
  const auto& h = cfg.hyper;
  j["train"] = {{"gamma", h.gamma},
                {"gae_lambda", h.gae_lambda},
                {"grad_clip_norm", h.grad_clip_norm},
                {"huber_delta", h.huber_delta},
                {"adam_eps", h.adam_eps},
                {"weight_decay", h.weight_decay},
                {"lr", h.lr},
                {"clip_eps", h.clip_eps},
                {"ppo_epochs", h.ppo_epochs},
                {"minibatches", h.minibatches},
                {"value_coef", h.value_coef},
                {"entropy_coef", h.entropy_coef},
                {"reward_normalization", h.reward_normalization},
                {"feature_normalization", h.feature_normalization},
                {"per_macro_discount", h.per_macro_discount},
                {"step_max", cfg.step_max},
                {"episodes_per_batch", cfg.episodes_per_batch},
                {"eval_every", cfg.eval_every},
                {"eval_episodes", cfg.eval_episodes},
                {"checkpoint_every", cfg.checkpoint_every}};
  j["episodes"] = cfg.episodes;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["jobs"] = cfg.jobs;
  if (!cfg.planners.empty()) j["planners"] = cfg.planners;
  if (!cfg.modes.empty()) j["modes"] = cfg.modes;
  return j.dump(2);
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return experiment_from_json(ss.str());
}

SourceFactory make_source_factory(const ExperimentConfig& cfg) {
  if (cfg.planner == "random") {
    const PolicyConfig pc = cfg.policy;
    return [pc](int) { return std::make_unique<RandomGoalSource>(pc); };
  }
  if (cfg.planner == "policy") {
    if (cfg.policy_checkpoint.empty()) throw Error(ErrorKind::Config, "planner = policy needs policy_checkpoint");
    const Checkpoint ck = load_checkpoint(cfg.policy_checkpoint);
    PolicyConfig pc = ck.config;
    const auto& e = cfg.episode;
    pc.S = e.fixed_map ? std::max(e.fixed_map->width(), e.fixed_map->height()) : std::max(e.map.width, e.map.height);
    auto policy = std::make_shared<Policy>(pc);
    if (ck.params.size() != policy->layout().total) throw Error(ErrorKind::Config, "checkpoint does not fit policy");
    policy->params() = ck.params;
    auto norm = std::make_shared<FeatureNormalizer>(ck.normalizer);
    auto hyper = std::make_shared<TrainHyper>(cfg.hyper);
    return [policy, norm, hyper](int i) -> std::unique_ptr<DecisionSource> {
      struct Owning : PolicySource {
        Owning(std::shared_ptr<Policy> p, std::shared_ptr<FeatureNormalizer> n, const TrainHyper& h, int i)
            : PolicySource(*p, *n, h, false, i), p_(std::move(p)), n_(std::move(n)) {}
        std::shared_ptr<Policy> p_;
        std::shared_ptr<FeatureNormalizer> n_;
      };
      return std::make_unique<Owning>(policy, norm, *hyper, i);
    };
  }
  const PlannerKind kind = planner_from_string(cfg.planner);
  const PlannerParams params = cfg.planner_params;
  return [kind, params](int) { return std::make_unique<PlannerSource>(kind, params); };
}

RunOutput cmd_run(const ExperimentConfig& cfg, bool write) {
  const auto results = run_episodes(cfg.episode, cfg.episodes, cfg.seed, make_source_factory(cfg), cfg.jobs);
  RunOutput out;
  for (int i = 0; i < cfg.episodes; ++i) {
    const auto& r = results[static_cast<std::size_t>(i)];
    out.episodes.push_back(episode_metrics(r, cfg.episode.t_max, cfg.episode.reward.success_threshold));
    out.seeds.push_back(derive_seed(cfg.seed, 0, static_cast<std::uint64_t>(i)));
  }
  out.row = {cfg.planner, to_string(cfg.episode.mode), map_size(cfg.episode), cfg.episode.n_agents,
             summarize(out.episodes)};
  if (write) {
    const std::filesystem::path dir = cfg.out_dir;
    std::filesystem::create_directories(dir);
    for (int i = 0; i < cfg.episodes; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "episode_%04d.jsonl", i);
      std::ofstream log(dir / name);
      if (!log) throw Error(ErrorKind::Io, "cannot write " + (dir / name).string());
      write_log(log, results[static_cast<std::size_t>(i)].log);
    }
    std::ofstream csv(dir / "results.csv");
    write_results_csv(csv, {out.row});
    std::ofstream conf(dir / "config.json");
    conf << experiment_to_json(cfg) << '\n';
    if (!csv || !conf) throw Error(ErrorKind::Io, "cannot write run outputs in " + dir.string());
  }
  return out;
}

namespace {

std::string comparable_key(const ExperimentConfig& c) {
  EpisodeConfig e = c.episode;
  e.mode = ExecutionMode::Async;
  e.seed = 0;
  json j = json::parse(config_to_json(e));
  j["episodes"] = c.episodes;
  j["seed"] = c.seed;
  return j.dump();
}

std::vector<ExperimentConfig> expand(const std::vector<ExperimentConfig>& cfgs) {
  std::vector<ExperimentConfig> out;
  for (const auto& c : cfgs) {
    const auto planners = c.planners.empty() ? std::vector<std::string>{c.planner} : c.planners;
    const auto modes = c.modes.empty() ? std::vector<std::string>{to_string(c.episode.mode)} : c.modes;
    for (const auto& p : planners) {
      for (const auto& m : modes) {
        ExperimentConfig e = c;
        e.planner = p;
        e.episode.mode = mode_from_string(m);
        e.planners.clear();
        e.modes.clear();
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

}  // namespace

void check_comparable(const std::vector<ExperimentConfig>& cfgs) {
  for (std::size_t i = 1; i < cfgs.size(); ++i)
    if (comparable_key(cfgs[i]) != comparable_key(cfgs[0]))
      throw Error(ErrorKind::RefusesMismatched,
                  "config " + std::to_string(i) + " differs from config 0 in more than planner/mode");
}

std::vector<RunOutput> cmd_compare(const std::vector<ExperimentConfig>& cfgs, const std::filesystem::path& out_dir) {
  const auto cells = expand(cfgs);
  if (cells.size() < 2) throw Error(ErrorKind::Config, "compare needs at least two planner/mode cells");
  check_comparable(cells);
  std::vector<RunOutput> outs;
  for (const auto& c : cells) outs.push_back(cmd_run(c, false));
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::vector<ResultRow> rows;
    for (const auto& o : outs) rows.push_back(o.row);
    std::ofstream csv(out_dir / "compare.csv");
    write_results_csv(csv, rows);
    std::ofstream paired(out_dir / "paired.csv");
    paired << "episode,seed";
    for (const auto& o : outs) paired << ',' << o.row.planner << '_' << o.row.mode;
    paired << '\n';
    paired.precision(17);
    for (std::size_t i = 0; i < outs[0].episodes.size(); ++i) {
      paired << i << ',' << outs[0].seeds[i];
      for (const auto& o : outs) paired << ',' << o.episodes[i].time;
      paired << '\n';
    }
    std::ofstream conf(out_dir / "config.json");
    conf << "[\n";
    for (std::size_t i = 0; i < cells.size(); ++i) conf << experiment_to_json(cells[i]) << (i + 1 < cells.size() ? ",\n" : "\n");
    conf << "]\n";
    if (!csv || !paired || !conf) throw Error(ErrorKind::Io, "cannot write compare outputs");
  }
  return outs;
}

TrainResult cmd_train(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.episode = cfg.episode;
  tc.episode.mode = ExecutionMode::Async;
  tc.episode.delay.enabled = true;
  tc.policy = cfg.policy;
  tc.hyper = cfg.hyper;
  tc.step_max = cfg.step_max;
  tc.episodes_per_batch = cfg.episodes_per_batch;
  tc.eval_every = cfg.eval_every;
  tc.eval_episodes = cfg.eval_episodes;
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.seed = cfg.seed;
  tc.jobs = cfg.jobs;
  std::optional<Checkpoint> resume;
  if (!cfg.policy_checkpoint.empty()) resume = load_checkpoint(cfg.policy_checkpoint);
  const std::filesystem::path dir = cfg.out_dir;
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "config.json") << experiment_to_json(cfg) << '\n';
  return train(tc, dir, resume);
}

std::string render_frame(const GridMap& map, const BoolGrid& explored, const std::vector<AgentPose>& poses,
                         const std::vector<bool>& alive) {
  std::string out;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      int agent = -1;
      for (std::size_t a = 0; a < poses.size(); ++a)
        if (alive[a] && poses[a].x == x && poses[a].y == y) {
          agent = static_cast<int>(a);
          break;
        }
      if (agent >= 0) out += static_cast<char>('0' + agent % 10);
      else if (!explored(y, x)) out += ' ';
      else if (map.at({x, y}) == Tile::Wall) out += '#';
      else out += "·";
    }
    out += '\n';
  }
  return out;
}

void cmd_replay(std::istream& in, std::ostream& out, int every) {
  if (every < 1) throw Error(ErrorKind::Config, "--every must be at least 1");
  const EpisodeLog log = read_log(in);
  BoolGrid explored = BoolGrid::Constant(log.map.height(), log.map.width(), false);
  std::vector<AgentPose> poses = log.spawns;
  std::vector<bool> alive(poses.size(), true);
  std::vector<Cell> spawn_cells;
  for (const auto& p : poses) spawn_cells.push_back(p.cell());
  const CoverageDomain domain = coverage_domain(log.map, spawn_cells);

  auto frame = [&](const char* label, double t) {
    const auto covered = (domain.cells && explored).count();
    char head[160];
    std::snprintf(head, sizeof head, "-- %s t=%.2f covered=%ld/%d ratio=%.4f\n", label, t, static_cast<long>(covered),
                  domain.size, coverage_ratio(domain, explored));
    out << head << render_frame(log.map, explored, poses, alive);
  };
  frame("start", 0.0);
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const LogEvent& e = log.events[i];
    if (e.agent >= static_cast<int>(poses.size())) throw Error(ErrorKind::CorruptLog, "event agent out of range");
    if (e.kind == EventKind::Spawn || e.kind == EventKind::Step) {
      poses[static_cast<std::size_t>(e.agent)] = {e.cell.x, e.cell.y, e.heading};
      for (const Cell& c : e.explored) {
        if (!log.map.in_bounds(c)) throw Error(ErrorKind::CorruptLog, "explored cell outside the map");
        explored(c.y, c.x) = true;
      }
    } else if (e.kind == EventKind::Loss) {
      alive[static_cast<std::size_t>(e.agent)] = false;
    }
    if ((i + 1) % static_cast<std::size_t>(every) == 0 || i + 1 == log.events.size())
      frame(to_string(e.kind).c_str(), e.t);
  }
}

std::string cmd_map_gen(const ExperimentConfig& cfg) {
  if (cfg.episode.fixed_map) return to_ascii(*cfg.episode.fixed_map);
  MapSpec spec = cfg.episode.map;
  spec.seed = cfg.seed;
  return to_ascii(generate_map(spec));
}

}  // namespace ax
