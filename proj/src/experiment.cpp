#include "ammrl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "ammrl/format.hpp"

namespace ammrl::exp {
namespace {

constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kAgentStream = 2;

constexpr const char* kMetricsHeader =
    "epoch,total_reward,fees_collected,success,held,canceled,mean_fee_rate,mean_leverage,"
    "epsilon,action_stddev";

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require(bool ok, const std::string& field) {
  if (!ok) throw std::invalid_argument("invalid config field: " + field);
}

sim::ScenarioConfig base_scenario(const Scenario& scenario) {
  return std::visit(overloaded{
                        [](const NormalTolerance&) { return sim::ScenarioConfig::normal(); },
                        [](const LooseTolerance&) { return sim::ScenarioConfig::loose(); },
                        [](const HighLiquidity&) { return sim::ScenarioConfig::high_liquidity(); },
                        [](const BehaviorChange& s) {
                          sim::ScenarioConfig c = sim::ScenarioConfig::normal();
                          c.tolerance = sim::tolerance_distribution(s.from);
                          return c;
                        },
                        [](const auto&) -> sim::ScenarioConfig {
                          throw std::invalid_argument(
                              "sweep scenarios run through sweep(), not as a single run");
                        },
                    },
                    scenario);
}

void apply_overrides(sim::ScenarioConfig& c, const EnvOverrides& o) {
  if (o.num_users) c.num_users = *o.num_users;
  if (o.swaps_per_epoch) c.swaps_per_epoch = *o.swaps_per_epoch;
  if (o.user_balance) c.user_balance = *o.user_balance;
  if (o.pool_liquidity) c.pool_liquidity = *o.pool_liquidity;
  if (o.amount_min) c.behavior.amount_min = *o.amount_min;
  if (o.amount_max) c.behavior.amount_max = *o.amount_max;
  if (o.tolerance) c.tolerance = *o.tolerance;
}

struct EpochTally {
  double reward = 0.0;
  double fees = 0.0;
  int success = 0;
  int held = 0;
  int canceled = 0;
  double fee_rate_sum = 0.0;
  double leverage_sum = 0.0;
  long steps = 0;

  void record(const sim::StepInfo& info, const amm::CurveParams& params) {
    reward += info.reward;
    fees += info.fee;
    switch (info.status) {
      case sim::SwapStatus::Success:
        ++success;
        break;
      case sim::SwapStatus::Holding:
        ++held;
        break;
      case sim::SwapStatus::Canceled:
        ++canceled;
        break;
    }
    fee_rate_sum += params.fee_rate();
    leverage_sum += params.leverage_coeff;
    ++steps;
  }
};

}  // namespace

bool is_sweep(const Scenario& scenario) {
  return std::holds_alternative<SwapSizeSweep>(scenario) ||
         std::holds_alternative<ToleranceSweep>(scenario) ||
         std::holds_alternative<UpdateIntervalSweep>(scenario);
}

std::string scenario_name(const Scenario& scenario) {
  return std::visit(overloaded{
                        [](const NormalTolerance&) { return std::string("normal"); },
                        [](const LooseTolerance&) { return std::string("loose"); },
                        [](const HighLiquidity&) { return std::string("high-liquidity"); },
                        [](const BehaviorChange&) { return std::string("behavior-change"); },
                        [](const SwapSizeSweep&) { return std::string("swap-size"); },
                        [](const ToleranceSweep&) { return std::string("tolerance"); },
                        [](const UpdateIntervalSweep&) { return std::string("update-interval"); },
                    },
                    scenario);
}

void ExperimentConfig::validate() const {
  require(epochs >= 1, "epochs");
  require(update_interval >= 1, "update_interval");
  require(!seeds.empty(), "seeds");
  try {
    hyper.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("invalid config field: hyperparams (") + e.what() +
                                ")");
  }
  std::visit(overloaded{
                 [](const SwapSizeSweep& s) {
                   require(!s.sizes.empty(), "sweep.values");
                   for (double v : s.sizes) require(v > 0.0, "sweep.values");
                 },
                 [](const ToleranceSweep& s) {
                   require(!s.values.empty(), "sweep.values");
                   for (double v : s.values) require(v > 0.0, "sweep.values");
                 },
                 [](const UpdateIntervalSweep& s) {
                   require(!s.intervals.empty(), "sweep.values");
                   for (int k : s.intervals) require(k >= 1, "sweep.values");
                 },
                 [](const auto&) {},
             },
             scenario);
  if (!is_sweep(scenario)) {
    sim::ScenarioConfig resolved = base_scenario(scenario);
    apply_overrides(resolved, env);
    try {
      resolved.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("invalid config field: env (") + e.what() + ")");
    }
  }
}

sim::ScenarioConfig scenario_for_epoch(const ExperimentConfig& config, int epoch) {
  sim::ScenarioConfig resolved = base_scenario(config.scenario);
  apply_overrides(resolved, config.env);
  if (const auto* change = std::get_if<BehaviorChange>(&config.scenario)) {
    const ToleranceMode mode = epoch < config.epochs / 2 ? change->from : change->to;
    resolved.tolerance = sim::tolerance_distribution(mode);
  }
  return resolved;
}

RunResult run_training(const ExperimentConfig& config, std::uint64_t seed,
                       const StepObserver& observer) {
  config.validate();
  if (is_sweep(config.scenario)) {
    throw std::invalid_argument("run_training needs a single scenario; use sweep()");
  }
  const auto started = std::chrono::steady_clock::now();

  RunResult result;
  result.config = config;
  result.seed = seed;
  result.metrics.reserve(static_cast<std::size_t>(config.epochs));
  result.actions.reserve(static_cast<std::size_t>(config.epochs));

  const AgentKind kind = config.agent;
  const bool learning = kind != AgentKind::Baseline;
  auto table = std::make_shared<rl::QTable>(kind);
  Rng agent_rng(derive_seed(seed, {kAgentStream}));
  sim::Environment env(scenario_for_epoch(config, 0));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    try {
      env.set_scenario(scenario_for_epoch(config, epoch));
      Rng env_rng(derive_seed(seed, {kEnvStream, static_cast<std::uint64_t>(epoch)}));
      sim::EnvObservation obs = env.reset(env_rng);
      if (!learning) {
        env.set_params(amm::kBaselineParams);
        obs = env.observe();
      }
      if (observer) observer(epoch, env);

      const double epsilon = rl::epsilon_at(epoch, config.hyper);
      EpochTally tally;
      std::vector<std::size_t> actions;
      while (!env.done()) {
        const std::size_t action = rl::select_action(*table, obs, epsilon, agent_rng);
        env.set_params(rl::apply_action(env.params(), rl::decode_action(kind, action)));
        actions.push_back(action);

        double reward = 0.0;
        for (int k = 0; k < config.update_interval && !env.done(); ++k) {
          const amm::CurveParams in_force = env.params();
          const sim::StepInfo info = env.step();
          tally.record(info, in_force);
          if (observer) observer(epoch, env);
          reward += info.reward;
        }
        const sim::EnvObservation next = env.observation();
        if (learning) {
          rl::td_update(*table, obs, action, reward, next, config.hyper, env.done());
        }
        obs = next;
      }

      EpochMetrics m;
      m.epoch = epoch;
      m.total_reward = tally.reward;
      m.fees_collected = tally.fees;
      m.success = tally.success;
      m.held = tally.held;
      m.canceled = tally.canceled;
      const double steps = static_cast<double>(std::max(1L, tally.steps));
      m.mean_fee_rate = tally.fee_rate_sum / steps;
      m.mean_leverage = tally.leverage_sum / steps;
      m.epsilon = learning ? epsilon : 0.0;
      m.action_stddev = rl::action_stddev(actions);
      result.metrics.push_back(m);
      result.actions.push_back(std::move(actions));
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "run failed (agent=" << rl::to_string(kind) << ", scenario="
          << scenario_name(config.scenario) << ", seed=" << seed << ", epoch=" << epoch
          << "): " << e.what();
      throw std::runtime_error(msg.str());
    }
  }

  result.qtable = std::move(table);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

RunResult run_behavior_change(const ExperimentConfig& config, std::uint64_t seed,
                              const StepObserver& observer) {
  if (!std::holds_alternative<BehaviorChange>(config.scenario)) {
    throw std::invalid_argument("run_behavior_change needs a behavior-change scenario");
  }
  return run_training(config, seed, observer);
}

std::vector<RunResult> run_many(const std::vector<RunRequest>& requests, int jobs) {
  std::vector<RunResult> results(requests.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i] = run_training(requests[i].config, requests[i].seed);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(1, requests.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

double terminal_reward(std::span<const EpochMetrics> metrics, double fraction) {
  if (metrics.empty()) throw std::invalid_argument("no epochs to summarize");
  const auto window = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(metrics.size()) - 1e-9)),
      1, metrics.size());
  double sum = 0.0;
  for (std::size_t i = metrics.size() - window; i < metrics.size(); ++i) {
    sum += metrics[i].total_reward;
  }
  return sum / static_cast<double>(window);
}

std::vector<double> sweep_values(const Scenario& scenario) {
  return std::visit(overloaded{
                        [](const SwapSizeSweep& s) { return s.sizes; },
                        [](const ToleranceSweep& s) { return s.values; },
                        [](const UpdateIntervalSweep& s) {
                          return std::vector<double>(s.intervals.begin(), s.intervals.end());
                        },
                        [](const auto&) -> std::vector<double> {
                          throw std::invalid_argument("not a sweep scenario");
                        },
                    },
                    scenario);
}

ExperimentConfig sweep_point(const ExperimentConfig& config, double value) {
  ExperimentConfig point = config;
  std::visit(overloaded{
                 [&](const SwapSizeSweep&) {
                   point.scenario = HighLiquidity{};
                   point.env.amount_min = value;
                   point.env.amount_max = value;
                 },
                 [&](const ToleranceSweep&) {
                   point.scenario = NormalTolerance{};
                   point.env.tolerance = sim::TruncatedNormal{value, value, 0.1, 5.0};
                 },
                 [&](const UpdateIntervalSweep&) {
                   point.scenario = NormalTolerance{};
                   point.update_interval = static_cast<int>(value);
                 },
                 [](const auto&) { throw std::invalid_argument("not a sweep scenario"); },
             },
             config.scenario);
  return point;
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, std::span<const AgentKind> agents,
                            int jobs) {
  config.validate();
  if (agents.empty()) throw std::invalid_argument("sweep needs at least one agent");
  std::vector<double> values = sweep_values(config.scenario);
  std::sort(values.begin(), values.end());

  std::vector<RunRequest> requests;
  for (double value : values) {
    for (AgentKind agent : agents) {
      ExperimentConfig point = sweep_point(config, value);
      point.agent = agent;
      for (std::uint64_t seed : config.seeds) requests.push_back({point, seed});
    }
  }
  const std::vector<RunResult> results = run_many(requests, jobs);

  std::vector<SweepRow> rows;
  std::size_t next = 0;
  for (double value : values) {
    for (AgentKind agent : agents) {
      SweepRow row{value, agent, 0.0, {}};
      for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        row.per_seed.push_back(terminal_reward(results[next++].metrics));
      }
      double sum = 0.0;
      for (double v : row.per_seed) sum += v;
      row.mean_terminal_reward = sum / static_cast<double>(row.per_seed.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving average window must be >= 1");
  std::vector<double> out;
  out.reserve(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= window) sum -= series[i - window];
    out.push_back(sum / static_cast<double>(std::min(window, i + 1)));
  }
  return out;
}

void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kMetricsHeader << '\n';
  for (const EpochMetrics& m : metrics) {
    out << m.epoch << ',' << format_double(m.total_reward) << ','
        << format_double(m.fees_collected) << ',' << m.success << ',' << m.held << ','
        << m.canceled << ',' << format_double(m.mean_fee_rate) << ','
        << format_double(m.mean_leverage) << ',' << format_double(m.epsilon) << ','
        << format_double(m.action_stddev) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_metrics_csv(const RunResult& result, const std::filesystem::path& path) {
  write_metrics_csv(result.metrics, path);
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error(path.string() + ": missing or unexpected metrics header");
  }
  std::vector<EpochMetrics> metrics;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const std::size_t comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    try {
      if (f.size() != 10) throw std::invalid_argument("expected 10 columns");
      EpochMetrics m;
      m.epoch = parse_integer<int>(f[0]);
      m.total_reward = parse_double(f[1]);
      m.fees_collected = parse_double(f[2]);
      m.success = parse_integer<int>(f[3]);
      m.held = parse_integer<int>(f[4]);
      m.canceled = parse_integer<int>(f[5]);
      m.mean_fee_rate = parse_double(f[6]);
      m.mean_leverage = parse_double(f[7]);
      m.epsilon = parse_double(f[8]);
      m.action_stddev = parse_double(f[9]);
      metrics.push_back(m);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return metrics;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::string& param,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << param << ",agent,mean_terminal_reward,per_seed\n";
  for (const SweepRow& row : rows) {
    out << format_double(row.value) << ',' << rl::to_string(row.agent) << ','
        << format_double(row.mean_terminal_reward) << ',';
    for (std::size_t i = 0; i < row.per_seed.size(); ++i) {
      out << (i ? ";" : "") << format_double(row.per_seed[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace ammrl::exp
