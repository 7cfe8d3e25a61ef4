// User population, swap queue and the queue-driven environment loop.
#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "ammrl/amm_core.hpp"
#include "ammrl/rng.hpp"

namespace ammrl::sim {

using amm::CurveParams;
using amm::PoolState;

struct TruncatedNormal {
  double mu = 0.0;
  double sigma = 1.0;
  double lower = 0.0;
  double upper = 1.0;

  friend bool operator==(const TruncatedNormal&, const TruncatedNormal&) = default;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kRejectionBudget = 10000;

/// Draws from N(mu, sigma) conditioned on [lower, upper] by rejection. Plain
/// normal proposals are used when the interval covers the mean; one-sided
/// tail intervals use an exponential proposal so far tails stay cheap.
double sample_truncated_normal(const TruncatedNormal& dist, Rng& rng,
                               int budget = kRejectionBudget);

enum class ToleranceMode { Normal, Loose };

TruncatedNormal tolerance_distribution(ToleranceMode mode);
TruncatedNormal urgency_distribution();

struct User {
  int id = 0;
  std::array<double, 2> balances{0.0, 0.0};

  friend bool operator==(const User&, const User&) = default;
};

std::vector<User> generate_users(int count, double initial_balance);

struct SwapOrder {
  double tolerance = 0.0;  // percent
  double urgency = 0.0;    // log-factor
  int user_id = 0;
  double amount = 0.0;
  int in_index = 0;
  bool planned = false;  // amount / in_index chosen
  int tries = 0;
  bool fresh = true;
  std::uint64_t stream = 0;  // seed of this order's private random stream

  double effective_tolerance() const;

  friend bool operator==(const SwapOrder&, const SwapOrder&) = default;
};

using SwapQueue = std::deque<SwapOrder>;

/// Reinserts a held order min(offset, queue length) places behind the head.
void requeue_held(SwapQueue& queue, SwapOrder order, int offset);

SwapQueue generate_swaps(int count, const TruncatedNormal& tolerance, int num_users, Rng& rng);
SwapQueue generate_swaps(int count, const TruncatedNormal& tolerance, int num_users, Rng& rng,
                         const TruncatedNormal& urgency);
SwapQueue generate_swaps(int count, ToleranceMode mode, int num_users, Rng& rng);

/// How a user sizes and reacts to a quote.
struct UserBehavior {
  double amount_min = 100.0;
  double amount_max = 1000.0;
  double inversion_fraction = 0.2;
  double cancel_probability = 0.4;
  double urgency_bump = 1.01;
  double urgency_cap = 0.6931471805599453;  // ln 2

  friend bool operator==(const UserBehavior&, const UserBehavior&) = default;
};

/// Applies the inversion rule to an already drawn index.
int choose_trade_side(const User& user, int picked, double fraction = 0.2);
int choose_trade_side(const User& user, Rng& rng, double fraction = 0.2);

/// Fixes amount and input token on an order that has not been sized yet.
void plan_trade(SwapOrder& order, const User& user, const UserBehavior& behavior, Rng& rng);

enum class SwapStatus { Success = 1, Holding = 0, Canceled = -1 };

/// The user's reaction to a quoted price impact. On a miss this performs the
/// cancellation draw and, when the order survives, the urgency bump.
SwapStatus user_decision(double price_impact_pct, SwapOrder& order, const UserBehavior& behavior,
                         Rng& rng);

struct AttemptResult {
  SwapStatus status = SwapStatus::Holding;
  double amount = 0.0;
  double fee = 0.0;
  amm::SwapQuote quote;
};

AttemptResult attempt_swap(SwapOrder& order, User& user, PoolState& pool,
                           const CurveParams& params, const UserBehavior& behavior, Rng& rng);

inline constexpr int kSlippageBuckets = 500;
inline constexpr int kZeroSlippageBucket = 250;
inline constexpr double kSlippageRange = 20.0;

int discretize_slippage(double slippage_pct);

struct EnvObservation {
  int slippage_bucket = kZeroSlippageBucket;
  int fee_level = 0;
  int leverage = 0;

  std::uint32_t key() const;
  static EnvObservation from_key(std::uint32_t key);

  friend bool operator==(const EnvObservation&, const EnvObservation&) = default;
};

struct ScenarioConfig {
  int num_users = 20;
  int swaps_per_epoch = 400;
  double pool_liquidity = 20000.0;
  double user_balance = 1000.0;
  TruncatedNormal tolerance = tolerance_distribution(ToleranceMode::Normal);
  TruncatedNormal urgency = urgency_distribution();
  UserBehavior behavior;
  int hold_offset = 10;
  int max_tries = 15;

  static ScenarioConfig normal();
  static ScenarioConfig loose();
  static ScenarioConfig high_liquidity();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct StepInfo {
  EnvObservation observation;
  double reward = 0.0;
  SwapStatus status = SwapStatus::Holding;
  bool expired = false;  // canceled by the environment after max_tries
  double fee = 0.0;
  bool done = false;
};

class Environment {
 public:
  explicit Environment(ScenarioConfig scenario);

  const ScenarioConfig& scenario() const { return scenario_; }
  /// Takes effect at the next reset.
  void set_scenario(ScenarioConfig scenario);

  /// Fresh pool, users and queue; fee level and leverage drawn uniformly.
  EnvObservation reset(Rng& rng);

  /// Services the head of the queue. An empty queue returns done = true.
  StepInfo step();

  /// Recomputes the observation for the current head under current params.
  const EnvObservation& observe();
  const EnvObservation& observation() const { return observation_; }

  const CurveParams& params() const { return params_; }
  void set_params(const CurveParams& params);

  const PoolState& pool() const { return pool_; }
  const std::vector<User>& users() const { return users_; }
  const SwapQueue& queue() const { return queue_; }
  SwapQueue& mutable_queue() { return queue_; }
  bool done() const { return queue_.empty(); }

  /// Users + pool + accrued fees, per token.
  std::array<double, 2> token_totals() const;

 private:
  Rng order_rng(const SwapOrder& order, std::uint64_t label) const;

  ScenarioConfig scenario_;
  PoolState pool_;
  CurveParams params_;
  std::vector<User> users_;
  SwapQueue queue_;
  EnvObservation observation_;
};

}  // namespace ammrl::sim
