// Training runs, baselines, sweeps and metrics persistence.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ammrl/market_sim.hpp"
#include "ammrl/rl_agent.hpp"

namespace ammrl::exp {

using rl::AgentKind;
using rl::Hyperparams;
using sim::ToleranceMode;

struct NormalTolerance {
  friend bool operator==(const NormalTolerance&, const NormalTolerance&) = default;
};
struct LooseTolerance {
  friend bool operator==(const LooseTolerance&, const LooseTolerance&) = default;
};
struct HighLiquidity {
  friend bool operator==(const HighLiquidity&, const HighLiquidity&) = default;
};
/// Tolerance mode switches from `from` to `to` at epoch floor(epochs / 2).
struct BehaviorChange {
  ToleranceMode from = ToleranceMode::Loose;
  ToleranceMode to = ToleranceMode::Normal;
  friend bool operator==(const BehaviorChange&, const BehaviorChange&) = default;
};
/// Every order trades exactly the swept amount; users hold high-liquidity balances.
struct SwapSizeSweep {
  std::vector<double> sizes;
  friend bool operator==(const SwapSizeSweep&, const SwapSizeSweep&) = default;
};
/// Tolerance drawn from a truncated normal with mu = sigma = value on [0.1, 5].
struct ToleranceSweep {
  std::vector<double> values;
  friend bool operator==(const ToleranceSweep&, const ToleranceSweep&) = default;
};
struct UpdateIntervalSweep {
  std::vector<int> intervals;
  friend bool operator==(const UpdateIntervalSweep&, const UpdateIntervalSweep&) = default;
};

using Scenario = std::variant<NormalTolerance, LooseTolerance, HighLiquidity, BehaviorChange,
                              SwapSizeSweep, ToleranceSweep, UpdateIntervalSweep>;

bool is_sweep(const Scenario& scenario);
std::string scenario_name(const Scenario& scenario);

/// Optional per-field overrides applied on top of the scenario defaults.
struct EnvOverrides {
  std::optional<int> num_users;
  std::optional<int> swaps_per_epoch;
  std::optional<double> user_balance;
  std::optional<double> pool_liquidity;
  std::optional<double> amount_min;
  std::optional<double> amount_max;
  std::optional<sim::TruncatedNormal> tolerance;

  friend bool operator==(const EnvOverrides&, const EnvOverrides&) = default;
};

struct ExperimentConfig {
  Scenario scenario = NormalTolerance{};
  AgentKind agent = AgentKind::Combined;
  int epochs = 500;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int update_interval = 1;
  Hyperparams hyper;
  EnvOverrides env;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Environment configuration in force for one epoch of a run.
sim::ScenarioConfig scenario_for_epoch(const ExperimentConfig& config, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double total_reward = 0.0;
  double fees_collected = 0.0;
  int success = 0;
  int held = 0;
  int canceled = 0;
  double mean_fee_rate = 0.0;  // percent, averaged over environment steps
  double mean_leverage = 0.0;
  double epsilon = 0.0;
  double action_stddev = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct RunResult {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> metrics;
  std::shared_ptr<const rl::QTable> qtable;
  std::vector<std::vector<std::size_t>> actions;  // decision actions per epoch
  double wall_seconds = 0.0;
};

/// Called after every reset and every environment step of a run.
using StepObserver = std::function<void(int epoch, const sim::Environment& env)>;

RunResult run_training(const ExperimentConfig& config, std::uint64_t seed,
                       const StepObserver& observer = {});
RunResult run_behavior_change(const ExperimentConfig& config, std::uint64_t seed,
                              const StepObserver& observer = {});

/// One run per (config, seed) pair, fanned out over `jobs` worker threads.
/// Results come back in request order.
struct RunRequest {
  ExperimentConfig config;
  std::uint64_t seed = 0;
};
std::vector<RunResult> run_many(const std::vector<RunRequest>& requests, int jobs = 1);

/// Mean total reward over the final `fraction` of epochs (at least one epoch).
double terminal_reward(std::span<const EpochMetrics> metrics, double fraction = 0.1);

struct SweepRow {
  double value = 0.0;
  AgentKind agent = AgentKind::Combined;
  double mean_terminal_reward = 0.0;
  std::vector<double> per_seed;
};

/// The plain (non-sweep) config that a single sweep point runs.
ExperimentConfig sweep_point(const ExperimentConfig& config, double value);
std::vector<double> sweep_values(const Scenario& scenario);

std::vector<SweepRow> sweep(const ExperimentConfig& config, std::span<const AgentKind> agents,
                            int jobs = 1);

std::vector<double> moving_average(std::span<const double> series, std::size_t window);

// CSV persistence.
void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::filesystem::path& path);
void write_metrics_csv(const RunResult& result, const std::filesystem::path& path);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);
void write_sweep_csv(std::span<const SweepRow> rows, const std::string& param,
                     const std::filesystem::path& path);

}  // namespace ammrl::exp
