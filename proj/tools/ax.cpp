#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ax/error.hpp"
#include "ax/experiment.hpp"

namespace {

ax::ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> jobs,
                          const std::string& out) {
  ax::ExperimentConfig cfg = path.empty() ? ax::experiment_from_json("{}") : ax::load_experiment(path);
  if (seed) cfg.seed = *seed;
  if (jobs) cfg.jobs = *jobs;
  if (!out.empty()) cfg.out_dir = out;
  return cfg;
}

void print_row(const ax::ResultRow& r) {
  std::cout << r.planner << ' ' << r.mode << ' ' << r.map_size << " n=" << r.n_agents
            << "  Time " << ax::format_stat(r.stats.time) << "  Overlap " << ax::format_stat(r.stats.overlap)
            << "  Coverage " << ax::format_stat(r.stats.coverage) << "  ACS " << ax::format_stat(r.stats.acs)
            << "  (" << r.stats.episodes << " episodes)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous multi-agent exploration workbench"};
  app.require_subcommand(1);

  std::string config, out;
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  auto common = [&](CLI::App* sub, bool many) {
    if (many) sub->add_option("--config", configs, "experiment config (JSON); repeatable")->required();
    else sub->add_option("--config", config, "experiment config (JSON)");
    sub->add_option("--seed", seed, "base seed");
    sub->add_option("--jobs", jobs, "parallel episodes")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory");
  };

  auto* run = app.add_subcommand("run", "run episodes and write logs + results.csv");
  common(run, false);
  auto* compare = app.add_subcommand("compare", "planner x mode matrix on shared seeds");
  common(compare, true);
  auto* train = app.add_subcommand("train", "Async-MAPPO training");
  common(train, false);

  auto* replay = app.add_subcommand("replay", "ASCII frames from an episode log");
  std::string log_path;
  int every = 1;
  replay->add_option("log", log_path, "episode .jsonl")->required();
  replay->add_option("--every", every, "events per frame")->check(CLI::PositiveNumber);

  auto* mapgen = app.add_subcommand("map-gen", "print a generated map");
  common(mapgen, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = load(config, seed, jobs, out);
      print_row(ax::cmd_run(cfg).row);
    } else if (*compare) {
      std::vector<ax::ExperimentConfig> cfgs;
      for (const auto& c : configs) cfgs.push_back(load(c, seed, jobs, out));
      const std::string dir = out.empty() ? cfgs.front().out_dir : out;
      for (const auto& o : ax::cmd_compare(cfgs, dir)) print_row(o.row);
    } else if (*train) {
      const auto cfg = load(config, seed, jobs, out);
      const auto result = ax::cmd_train(cfg);
      std::cout << "trained " << result.checkpoint.steps << " macro steps in " << result.checkpoint.batch
                << " batches -> " << cfg.out_dir << "/policy.bin\n";
    } else if (*replay) {
      std::ifstream in(log_path);
      if (!in) throw ax::Error(ax::ErrorKind::Io, "cannot read " + log_path);
      ax::cmd_replay(in, std::cout, every);
    } else if (*mapgen) {
      const auto cfg = load(config, seed, jobs, out);
      const std::string map = ax::cmd_map_gen(cfg);
      if (out.empty()) {
        std::cout << map;
      } else {
        std::filesystem::create_directories(out);
        ax::save_map(std::filesystem::path(out) / "map.txt", ax::from_ascii(map));
      }
    }
  } catch (const ax::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
