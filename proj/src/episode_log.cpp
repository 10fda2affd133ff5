#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ax/engine.hpp"
#include "ax/error.hpp"

namespace ax {

using nlohmann::json;

namespace {

Heading heading_from_char(char c) {
  switch (c) {
    case 'N': return Heading::N;
    case 'E': return Heading::E;
    case 'S': return Heading::S;
    case 'W': return Heading::W;
  }
  throw Error(ErrorKind::Config, std::string("bad heading '") + c + "'");
}

json pose_json(const AgentPose& p) { return json::array({p.x, p.y, std::string(1, heading_char(p.heading))}); }

AgentPose pose_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), heading_from_char(j.at(2).get<std::string>().at(0))};
}

json cell_json(Cell c) { return json::array({c.x, c.y}); }
Cell cell_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

json map_json(const GridMap& map) {
  json rows = json::array();
  std::istringstream in(to_ascii(map));
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

GridMap map_from(const json& j) {
  std::string text;
  for (const auto& row : j) text += row.get<std::string>() + "\n";
  return from_ascii(text);
}

json config_json(const EpisodeConfig& c) {
  json j;
  j["map"] = {{"width", c.map.width},
              {"height", c.map.height},
              {"rooms_min", c.map.rooms.min},
              {"rooms_max", c.map.rooms.max}};
  if (c.fixed_map) j["fixed_map"] = map_json(*c.fixed_map);
  if (c.fixed_spawns) {
    json s = json::array();
    for (const auto& p : *c.fixed_spawns) s.push_back(pose_json(p));
    j["fixed_spawns"] = s;
  }
  j["n_agents"] = c.n_agents;
  j["mode"] = to_string(c.mode);
  j["timing"] = {{"forward_s", c.timing.forward_s},
                 {"turn_s", c.timing.turn_s},
                 {"inference_s", c.timing.inference_s},
                 {"delay_step_s", c.timing.delay_step_s}};
  j["delay"] = {{"min_steps", c.delay.min_steps}, {"max_steps", c.delay.max_steps}, {"enabled", c.delay.enabled}};
  j["injected_delay_s"] = c.injected_delay_s;
  if (c.loss)
    j["loss"] = {{"initial_n", c.loss->initial_n},
                 {"surviving_n", c.loss->surviving_n},
                 {"trigger_coverage", c.loss->trigger_coverage}};
  j["sensor"] = {{"fov_radius", c.sensor.fov_radius},
                 {"trajectory_decay", c.sensor.trajectory_decay},
                 {"trajectory_near", c.sensor.trajectory_near}};
  j["reward"] = {{"team_coverage_coeff", c.reward.team_coverage_coeff},
                 {"individual_coverage_coeff", c.reward.individual_coverage_coeff},
                 {"overlap_coeff", c.reward.overlap_coeff},
                 {"success_threshold", c.reward.success_threshold},
                 {"overlap_cutoff", c.reward.overlap_cutoff}};
  j["t_max"] = c.t_max;
  j["stop_ratio"] = c.stop_ratio;
  j["max_local_steps"] = c.max_local_steps;
  j["seed"] = c.seed;
  return j;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw Error(ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
}

EpisodeConfig config_from(const json& j) {
  EpisodeConfig c;
  require_keys(j,
               {"map", "fixed_map", "fixed_spawns", "n_agents", "mode", "timing", "delay", "injected_delay_s", "loss",
                "sensor", "reward", "t_max", "stop_ratio", "max_local_steps", "seed"},
               "episode config");
  if (j.contains("map")) {
    const json& m = j.at("map");
    require_keys(m, {"width", "height", "rooms_min", "rooms_max"}, "map");
    read_opt(m, "width", c.map.width);
    read_opt(m, "height", c.map.height);
    read_opt(m, "rooms_min", c.map.rooms.min);
    read_opt(m, "rooms_max", c.map.rooms.max);
  }
  if (j.contains("fixed_map")) c.fixed_map = map_from(j.at("fixed_map"));
  if (j.contains("fixed_spawns")) {
    std::vector<AgentPose> s;
    for (const auto& p : j.at("fixed_spawns")) s.push_back(pose_from(p));
    c.fixed_spawns = std::move(s);
  }
  read_opt(j, "n_agents", c.n_agents);
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("timing")) {
    const json& t = j.at("timing");
    require_keys(t, {"forward_s", "turn_s", "inference_s", "delay_step_s"}, "timing");
    read_opt(t, "forward_s", c.timing.forward_s);
    read_opt(t, "turn_s", c.timing.turn_s);
    read_opt(t, "inference_s", c.timing.inference_s);
    read_opt(t, "delay_step_s", c.timing.delay_step_s);
  }
  if (j.contains("delay")) {
    const json& d = j.at("delay");
    require_keys(d, {"min_steps", "max_steps", "enabled"}, "delay");
    read_opt(d, "min_steps", c.delay.min_steps);
    read_opt(d, "max_steps", c.delay.max_steps);
    read_opt(d, "enabled", c.delay.enabled);
  }
  read_opt(j, "injected_delay_s", c.injected_delay_s);
  if (j.contains("loss") && !j.at("loss").is_null()) {
    LossSchedule l;
    const json& s = j.at("loss");
    require_keys(s, {"initial_n", "surviving_n", "trigger_coverage"}, "loss");
    read_opt(s, "initial_n", l.initial_n);
    read_opt(s, "surviving_n", l.surviving_n);
    read_opt(s, "trigger_coverage", l.trigger_coverage);
    c.loss = l;
  }
  if (j.contains("sensor")) {
    const json& s = j.at("sensor");
    require_keys(s, {"fov_radius", "trajectory_decay", "trajectory_near"}, "sensor");
    read_opt(s, "fov_radius", c.sensor.fov_radius);
    read_opt(s, "trajectory_decay", c.sensor.trajectory_decay);
    read_opt(s, "trajectory_near", c.sensor.trajectory_near);
  }
  if (j.contains("reward")) {
    const json& r = j.at("reward");
    require_keys(r, {"team_coverage_coeff", "individual_coverage_coeff", "overlap_coeff", "success_threshold",
                     "overlap_cutoff"},
                 "reward");
    read_opt(r, "team_coverage_coeff", c.reward.team_coverage_coeff);
    read_opt(r, "individual_coverage_coeff", c.reward.individual_coverage_coeff);
    read_opt(r, "overlap_coeff", c.reward.overlap_coeff);
    read_opt(r, "success_threshold", c.reward.success_threshold);
    read_opt(r, "overlap_cutoff", c.reward.overlap_cutoff);
  }
  read_opt(j, "t_max", c.t_max);
  read_opt(j, "stop_ratio", c.stop_ratio);
  read_opt(j, "max_local_steps", c.max_local_steps);
  read_opt(j, "seed", c.seed);
  return c;
}

EventKind event_kind_from(const std::string& s) {
  for (EventKind k : {EventKind::Spawn, EventKind::Decide, EventKind::Step, EventKind::Loss, EventKind::End})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::CorruptLog, "unknown event kind '" + s + "'");
}

Termination termination_from(const std::string& s) {
  for (Termination t : {Termination::Covered, Termination::TimeCap, Termination::Deadlock})
    if (to_string(t) == s) return t;
  throw Error(ErrorKind::CorruptLog, "unknown termination '" + s + "'");
}

}  // namespace

std::string config_to_json(const EpisodeConfig& config) { return config_json(config).dump(); }

EpisodeConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

void write_log(std::ostream& out, const EpisodeLog& log) {
  json h;
  h["type"] = "header";
  h["config"] = json::parse(log.config_json);
  h["seeds"] = {{"map", log.seeds.map}, {"spawn", log.seeds.spawn}, {"delay", log.seeds.delay},
                {"decision", log.seeds.decision}};
  h["map"] = map_json(log.map);
  json spawns = json::array();
  for (const auto& p : log.spawns) spawns.push_back(pose_json(p));
  h["spawns"] = spawns;
  h["domain_size"] = log.domain_size;
  h["terminal_time"] = log.terminal_time;
  h["reason"] = to_string(log.reason);
  h["final_ratio"] = log.final_ratio;
  h["success_time"] = log.success_time ? json(*log.success_time) : json(nullptr);
  json macros = json::array();
  for (const auto& m : log.macros)
    macros.push_back({m.agent, m.index, m.issued_at, m.ended_at, m.goal.x, m.goal.y, m.steps});
  h["macros"] = macros;
  h["events"] = log.events.size();
  out << h.dump() << '\n';

  for (const auto& e : log.events) {
    json j;
    j["t"] = e.t;
    j["agent"] = e.agent;
    j["kind"] = to_string(e.kind);
    j["cell"] = cell_json(e.cell);
    j["heading"] = std::string(1, heading_char(e.heading));
    j["ratio"] = e.ratio;
    j["reward"] = e.reward;
    json ex = json::array();
    for (const Cell& c : e.explored) ex.push_back(cell_json(c));
    j["explored"] = ex;
    j["new_team"] = e.new_team;
    j["new_individual"] = e.new_individual;
    j["overlap"] = e.overlap;
    j["success"] = e.success;
    j["macro"] = e.macro_index;
    j["comm_bytes"] = e.comm_bytes;
    out << j.dump() << '\n';
  }
}

EpisodeLog read_log(std::istream& in) {
  EpisodeLog log;
  std::string line;
  int line_no = 0;
  std::size_t expected = 0;
  auto fail = [&line_no](const std::string& why) {
    return Error(ErrorKind::CorruptLog, "line " + std::to_string(line_no) + ": " + why);
  };
  try {
    if (!std::getline(in, line)) throw Error(ErrorKind::CorruptLog, "line 1: empty log");
    line_no = 1;
    const json h = json::parse(line);
    if (h.value("type", "") != "header") throw fail("missing header record");
    log.config_json = h.at("config").dump();
    const json& s = h.at("seeds");
    log.seeds = {s.at("map").get<std::uint64_t>(), s.at("spawn").get<std::uint64_t>(),
                 s.at("delay").get<std::uint64_t>(), s.at("decision").get<std::uint64_t>()};
    log.map = map_from(h.at("map"));
    for (const auto& p : h.at("spawns")) log.spawns.push_back(pose_from(p));
    log.domain_size = h.at("domain_size").get<int>();
    log.terminal_time = h.at("terminal_time").get<double>();
    log.reason = termination_from(h.at("reason").get<std::string>());
    log.final_ratio = h.at("final_ratio").get<double>();
    if (!h.at("success_time").is_null()) log.success_time = h.at("success_time").get<double>();
    for (const auto& m : h.at("macros"))
      log.macros.push_back({m.at(0).get<int>(), m.at(1).get<int>(), m.at(2).get<double>(), m.at(3).get<double>(),
                            {m.at(4).get<int>(), m.at(5).get<int>()}, m.at(6).get<int>()});
    expected = h.at("events").get<std::size_t>();

    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      LogEvent e;
      e.t = j.at("t").get<double>();
      e.agent = j.at("agent").get<int>();
      e.kind = event_kind_from(j.at("kind").get<std::string>());
      e.cell = cell_from(j.at("cell"));
      e.heading = heading_from_char(j.at("heading").get<std::string>().at(0));
      e.ratio = j.at("ratio").get<double>();
      e.reward = j.at("reward").get<double>();
      for (const auto& c : j.at("explored")) e.explored.push_back(cell_from(c));
      e.new_team = j.at("new_team").get<int>();
      e.new_individual = j.at("new_individual").get<int>();
      e.overlap = j.at("overlap").get<std::vector<int>>();
      e.success = j.at("success").get<bool>();
      e.macro_index = j.at("macro").get<int>();
      e.comm_bytes = j.at("comm_bytes").get<std::size_t>();
      log.events.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw fail(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptLog) throw;
    throw fail(e.what());
  } catch (const std::out_of_range& e) {
    throw fail(e.what());
  }
  if (log.events.size() != expected)
    throw Error(ErrorKind::CorruptLog, "line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                                           " events, found " + std::to_string(log.events.size()));
  return log;
}

}  // namespace ax
