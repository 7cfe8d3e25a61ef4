#include "ammrl/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ammrl/config.hpp"
#include "ammrl/experiment.hpp"
#include "ammrl/format.hpp"

namespace ammrl::cli {
namespace {

namespace fs = std::filesystem;
using exp::ConfigError;
using exp::ExperimentConfig;
using nlohmann::json;

enum class Command { Train, Baseline, BehaviorChange, Sweep, Compare };

struct Flags {
  std::optional<std::string> config_path;
  std::optional<std::string> profile;
  std::optional<std::string> out;
  std::optional<std::string> agent;
  std::optional<std::string> scenario;
  std::optional<std::string> from;
  std::optional<std::string> to;
  std::optional<std::string> param;
  std::optional<int> epochs;
  std::optional<int> k;
  std::optional<int> jobs;
  std::optional<double> alpha, gamma, eps_max, eps_min, eta;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  std::vector<std::string> agents;
  std::vector<std::string> dirs;
};

void add_run_options(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "JSON config file; flags override its values");
  sub->add_option("--profile", f.profile, "desk (500 epochs) or paper (3000 epochs)");
  sub->add_option("--epochs", f.epochs, "training epochs per run");
  sub->add_option("--seeds", f.seeds, "comma-separated seeds")->delimiter(',');
  sub->add_option("--k", f.k, "environment steps between agent decisions");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--alpha", f.alpha, "learning rate");
  sub->add_option("--gamma", f.gamma, "discount factor");
  sub->add_option("--eps-max", f.eps_max, "initial exploration rate");
  sub->add_option("--eps-min", f.eps_min, "floor exploration rate");
  sub->add_option("--eta", f.eta, "exploration decay per epoch");
  sub->add_option("--jobs", f.jobs, "worker threads (default 1)");
}

fs::path output_root(const Flags& f) {
  if (f.out) return *f.out;
  if (const char* root = std::getenv(kOutRootEnv); root && *root) return root;
  return "runs";
}

template <class Fn>
auto keyed(const char* key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

std::vector<double> default_sweep_values(const std::string& param) {
  if (param == "swap-size") return {1000, 2000, 3750, 7500, 12000, 18000};
  if (param == "tolerance") return {0.25, 0.40, 0.55, 0.75};
  if (param == "update-interval") return {1, 5, 10, 25, 50};
  throw ConfigError("param", "unknown sweep parameter '" + param +
                                 "' (expected swap-size, tolerance or update-interval)");
}

ExperimentConfig resolve(const Flags& f, Command cmd) {
  ExperimentConfig config;
  if (f.config_path) config = exp::load_config(*f.config_path);
  if (f.profile) config.epochs = keyed("profile", [&] { return exp::profile_epochs(*f.profile); });
  if (f.epochs) config.epochs = *f.epochs;
  if (!f.seeds.empty()) config.seeds = f.seeds;
  if (f.k) config.update_interval = *f.k;
  if (f.alpha) config.hyper.alpha = *f.alpha;
  if (f.gamma) config.hyper.gamma = *f.gamma;
  if (f.eps_max) config.hyper.eps_max = *f.eps_max;
  if (f.eps_min) config.hyper.eps_min = *f.eps_min;
  if (f.eta) config.hyper.eta = *f.eta;
  if (f.agent) config.agent = keyed("agent", [&] { return rl::parse_agent_kind(*f.agent); });
  if (f.jobs && *f.jobs < 1) throw ConfigError("jobs", "must be at least 1");

  switch (cmd) {
    case Command::Train:
    case Command::Baseline:
      if (f.scenario) {
        config.scenario = keyed("scenario", [&] { return exp::make_scenario(*f.scenario); });
      }
      if (exp::is_sweep(config.scenario)) {
        throw ConfigError("scenario", "sweep scenarios run through the sweep command");
      }
      if (std::holds_alternative<exp::BehaviorChange>(config.scenario)) {
        throw ConfigError("scenario", "use the behavior-change command for this scenario");
      }
      if (cmd == Command::Baseline) config.agent = rl::AgentKind::Baseline;
      break;
    case Command::BehaviorChange: {
      exp::BehaviorChange change;
      if (const auto* prior = std::get_if<exp::BehaviorChange>(&config.scenario)) change = *prior;
      if (f.from) change.from = keyed("from", [&] { return exp::parse_tolerance_mode(*f.from); });
      if (f.to) change.to = keyed("to", [&] { return exp::parse_tolerance_mode(*f.to); });
      config.scenario = change;
      break;
    }
    case Command::Sweep: {
      std::string param;
      std::vector<double> values;
      if (exp::is_sweep(config.scenario)) {
        param = exp::scenario_name(config.scenario);
        values = exp::sweep_values(config.scenario);
      }
      if (f.param && *f.param != param) {
        param = *f.param;
        values.clear();
      }
      if (param.empty()) throw ConfigError("param", "missing sweep parameter");
      const std::vector<double> defaults = default_sweep_values(param);
      if (!f.values.empty()) values = f.values;
      if (values.empty()) values = defaults;
      config.scenario = keyed("values", [&] { return exp::make_scenario(param, values); });
      break;
    }
    case Command::Compare:
      break;
  }
  config.validate();
  return config;
}

std::vector<rl::AgentKind> resolve_agents(const Flags& f) {
  std::vector<rl::AgentKind> agents;
  if (f.agents.empty()) {
    return {rl::AgentKind::Baseline, rl::AgentKind::FeeOnly, rl::AgentKind::LeverageOnly,
            rl::AgentKind::Combined};
  }
  for (const std::string& name : f.agents) {
    const auto kind = keyed("agents", [&] { return rl::parse_agent_kind(name); });
    if (std::find(agents.begin(), agents.end(), kind) == agents.end()) agents.push_back(kind);
  }
  return agents;
}

std::string run_dir_name(rl::AgentKind agent, std::uint64_t seed) {
  return std::string(rl::to_string(agent)) + "-seed" + std::to_string(seed);
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

int do_runs(const ExperimentConfig& config, const fs::path& root, int jobs, Command cmd,
            std::ostream& out) {
  std::vector<exp::RunRequest> requests;
  for (std::uint64_t seed : config.seeds) requests.push_back({config, seed});
  const std::vector<exp::RunResult> results = exp::run_many(requests, jobs);

  fs::create_directories(root);
  json runs = json::array();
  for (const exp::RunResult& r : results) {
    const std::string name = run_dir_name(config.agent, r.seed);
    const fs::path dir = root / name;
    fs::create_directories(dir);
    exp::write_metrics_csv(r, dir / "metrics.csv");
    json entry = {{"agent", std::string(rl::to_string(config.agent))},
                  {"seed", r.seed},
                  {"dir", name},
                  {"metrics", "metrics.csv"},
                  {"terminal_reward", exp::terminal_reward(r.metrics)}};
    if (cmd != Command::Baseline) {
      rl::save_qtable(*r.qtable, config.hyper, dir / "qtable.txt");
      entry["qtable"] = "qtable.txt";
    }
    runs.push_back(entry);
    out << name << "  terminal reward " << format_double(exp::terminal_reward(r.metrics))
        << "  (" << std::fixed << std::setprecision(2) << r.wall_seconds << " s)"
        << std::defaultfloat << '\n';
  }
  const char* command = cmd == Command::Train            ? "train"
                        : cmd == Command::Baseline       ? "baseline"
                                                         : "behavior-change";
  write_json({{"command", command}, {"config", exp::config_to_json(config)}, {"runs", runs}},
             root / "manifest.json");
  out << "wrote " << results.size() << " run(s) to " << root.string() << '\n';
  return kExitOk;
}

int do_sweep(const ExperimentConfig& config, const std::vector<rl::AgentKind>& agents,
             const fs::path& root, int jobs, std::ostream& out) {
  const std::vector<exp::SweepRow> rows = exp::sweep(config, agents, jobs);
  const std::string param = exp::scenario_name(config.scenario);
  fs::create_directories(root);
  const std::string summary = "sweep-" + param + ".csv";
  exp::write_sweep_csv(rows, param, root / summary);

  json agent_names = json::array();
  for (rl::AgentKind a : agents) agent_names.push_back(std::string(rl::to_string(a)));
  write_json({{"command", "sweep"},
              {"config", exp::config_to_json(config)},
              {"agents", agent_names},
              {"summary", summary}},
             root / "manifest.json");

  out << param << ",agent,mean_terminal_reward\n";
  for (const exp::SweepRow& row : rows) {
    out << format_double(row.value) << ',' << rl::to_string(row.agent) << ','
        << format_double(row.mean_terminal_reward) << '\n';
  }
  out << "wrote " << (root / summary).string() << '\n';
  return kExitOk;
}

struct CompareRow {
  std::string label;
  std::string agent;
  std::vector<std::uint64_t> seeds;
  double mean = 0.0;
};

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("dirs", "no manifest.json in " + dir.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("dirs", path.string() + " is not a valid manifest: " + e.what());
  }
}

json scenario_signature(const json& config) {
  json sig;
  for (const char* key : {"scenario", "behavior_change", "env", "epochs", "update_interval"}) {
    if (config.contains(key)) sig[key] = config[key];
  }
  return sig;
}

int do_compare(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.dirs.size() < 2) {
    err << "error: compare needs at least two run directories\n";
    return kExitConfig;
  }
  std::vector<json> manifests;
  try {
    for (const std::string& d : f.dirs) {
      json m = read_manifest(d);
      if (!m.contains("config") || !m.contains("runs") || !m["runs"].is_array()) {
        throw ConfigError("dirs", d + ": manifest has no runs (sweep outputs cannot be compared)");
      }
      manifests.push_back(std::move(m));
    }
    const json reference = scenario_signature(manifests.front()["config"]);
    for (std::size_t i = 1; i < manifests.size(); ++i) {
      if (scenario_signature(manifests[i]["config"]) != reference) {
        throw ConfigError("dirs", "scenario of " + f.dirs[i] + " does not match " +
                                      f.dirs.front());
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    std::map<std::string, CompareRow> by_agent;
    for (const json& run : manifests[i]["runs"]) {
      const std::string agent = run.at("agent").get<std::string>();
      const fs::path csv = fs::path(f.dirs[i]) / run.at("dir").get<std::string>() /
                           run.at("metrics").get<std::string>();
      const auto metrics = exp::read_metrics_csv(csv);
      CompareRow& row = by_agent[agent];
      row.label = f.dirs[i];
      row.agent = agent;
      row.seeds.push_back(run.at("seed").get<std::uint64_t>());
      row.mean += exp::terminal_reward(metrics);
    }
    for (auto& [agent, row] : by_agent) {
      row.mean /= static_cast<double>(row.seeds.size());
      rows.push_back(row);
    }
  }

  const fs::path root = output_root(f);
  fs::create_directories(root);
  std::ofstream means(root / "compare.csv", std::ios::binary);
  std::ofstream ratios(root / "compare-ratios.csv", std::ios::binary);
  if (!means || !ratios) throw std::runtime_error("cannot write compare output in " + root.string());
  means << "dir,agent,seeds,mean_terminal_reward\n";
  out << "dir,agent,seeds,mean_terminal_reward\n";
  for (const CompareRow& row : rows) {
    std::string seeds;
    for (std::size_t s = 0; s < row.seeds.size(); ++s) {
      seeds += (s ? ";" : "") + std::to_string(row.seeds[s]);
    }
    const std::string line =
        row.label + ',' + row.agent + ',' + seeds + ',' + format_double(row.mean);
    means << line << '\n';
    out << line << '\n';
  }
  ratios << "numerator,denominator,ratio\n";
  out << "numerator,denominator,ratio\n";
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < rows.size(); ++b) {
      if (a == b) continue;
      const std::string line = rows[a].label + ':' + rows[a].agent + ',' + rows[b].label + ':' +
                               rows[b].agent + ',' + format_double(rows[a].mean / rows[b].mean);
      ratios << line << '\n';
      out << line << '\n';
    }
  }
  if (!means || !ratios) throw std::runtime_error("failed writing compare output");
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Q-learning control of an AMM's fee rate and curve leverage", "ammrl"};
  app.require_subcommand(1);

  Flags train, baseline, change, sweep_flags, compare;
  CLI::App* train_cmd = app.add_subcommand("train", "train one agent over the listed seeds");
  add_run_options(train_cmd, train);
  train_cmd->add_option("--agent", train.agent, "fee | leverage | combined | baseline");
  train_cmd->add_option("--scenario", train.scenario, "normal | loose | high-liquidity");

  CLI::App* baseline_cmd = app.add_subcommand("baseline", "run the static 0.17% / A=42 pool");
  add_run_options(baseline_cmd, baseline);
  baseline_cmd->add_option("--scenario", baseline.scenario, "normal | loose | high-liquidity");

  CLI::App* change_cmd =
      app.add_subcommand("behavior-change", "switch tolerance mode at the halfway epoch");
  add_run_options(change_cmd, change);
  change_cmd->add_option("--agent", change.agent, "fee | leverage | combined | baseline");
  change_cmd->add_option("--from", change.from, "tolerance mode before the switch");
  change_cmd->add_option("--to", change.to, "tolerance mode after the switch");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train every agent at each sweep value");
  add_run_options(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--param", sweep_flags.param, "swap-size | tolerance | update-interval");
  sweep_cmd->add_option("--values", sweep_flags.values, "comma-separated sweep values")
      ->delimiter(',');
  sweep_cmd->add_option("--agents", sweep_flags.agents, "comma-separated agent kinds")
      ->delimiter(',');

  CLI::App* compare_cmd = app.add_subcommand("compare", "tabulate terminal rewards across runs");
  compare_cmd->add_option("dirs", compare.dirs, "run directories holding manifest.json");
  compare_cmd->add_option("--out", compare.out, "where compare.csv is written");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitConfig;
  }

  try {
    if (compare_cmd->parsed()) return do_compare(compare, out, err);

    Command cmd = Command::Train;
    Flags* flags = &train;
    if (baseline_cmd->parsed()) {
      cmd = Command::Baseline;
      flags = &baseline;
    } else if (change_cmd->parsed()) {
      cmd = Command::BehaviorChange;
      flags = &change;
    } else if (sweep_cmd->parsed()) {
      cmd = Command::Sweep;
      flags = &sweep_flags;
    }

    ExperimentConfig config;
    std::vector<rl::AgentKind> agents;
    try {
      config = resolve(*flags, cmd);
      if (cmd == Command::Sweep) agents = resolve_agents(*flags);
    } catch (const std::invalid_argument& e) {
      err << "error: " << e.what() << '\n';
      return kExitConfig;
    }
    const int jobs = flags->jobs.value_or(1);
    const fs::path root = output_root(*flags);
    if (cmd == Command::Sweep) return do_sweep(config, agents, root, jobs, out);
    return do_runs(config, root, jobs, cmd, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace ammrl::cli
