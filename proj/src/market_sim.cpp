#include "ammrl/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ammrl::sim {
namespace {

const double kLn2 = std::log(2.0);

// Normal tail on [a, b] with a > 0, exponential proposal with the optimal rate.
bool sample_upper_tail(double a, double b, Rng& rng, int budget, double& z) {
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (int k = 0; k < budget; ++k) {
    const double candidate = a + rng.exponential(rate);
    const double accept = std::exp(-0.5 * (candidate - rate) * (candidate - rate));
    if (rng.uniform() <= accept && candidate <= b) {
      z = candidate;
      return true;
    }
  }
  return false;
}

void hold_order(SwapOrder& order, const UserBehavior& behavior) {
  order.urgency = std::min(order.urgency * behavior.urgency_bump, behavior.urgency_cap);
  ++order.tries;
  order.fresh = false;
}

void require(bool ok, const char* field) {
  if (!ok) throw std::invalid_argument(std::string("invalid scenario field: ") + field);
}

}  // namespace

double sample_truncated_normal(const TruncatedNormal& dist, Rng& rng, int budget) {
  if (!(dist.sigma > 0.0) || !(dist.lower < dist.upper)) {
    throw std::invalid_argument("truncated normal needs sigma > 0 and lower < upper");
  }
  const double a = (dist.lower - dist.mu) / dist.sigma;
  const double b = (dist.upper - dist.mu) / dist.sigma;
  double z = 0.0;
  bool ok = false;
  if (a > 0.0) {
    ok = sample_upper_tail(a, b, rng, budget, z);
  } else if (b < 0.0) {
    ok = sample_upper_tail(-b, -a, rng, budget, z);
    z = -z;
  } else {
    for (int k = 0; k < budget && !ok; ++k) {
      z = rng.normal();
      ok = (z >= a && z <= b);
    }
  }
  if (!ok) {
    throw SamplingError("truncated normal rejection budget exhausted");
  }
  return std::clamp(dist.mu + dist.sigma * z, dist.lower, dist.upper);
}

TruncatedNormal tolerance_distribution(ToleranceMode mode) {
  switch (mode) {
    case ToleranceMode::Normal:
      return {0.25, 0.25, 0.1, 5.0};
    case ToleranceMode::Loose:
      return {0.75, 0.75, 0.1, 5.0};
  }
  throw std::invalid_argument("unknown tolerance mode");
}

TruncatedNormal urgency_distribution() { return {std::log(1.5), 0.25, 0.0, kLn2}; }

std::vector<User> generate_users(int count, double initial_balance) {
  if (count <= 0) throw std::invalid_argument("user count must be positive");
  std::vector<User> users(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    users[k] = User{k, {initial_balance, initial_balance}};
  }
  return users;
}

double SwapOrder::effective_tolerance() const { return tolerance * std::exp(urgency); }

void requeue_held(SwapQueue& queue, SwapOrder order, int offset) {
  const auto position = std::min<std::size_t>(static_cast<std::size_t>(offset), queue.size());
  queue.insert(queue.begin() + static_cast<std::ptrdiff_t>(position), std::move(order));
}

SwapQueue generate_swaps(int count, const TruncatedNormal& tolerance, int num_users, Rng& rng,
                         const TruncatedNormal& urgency) {
  if (count <= 0 || num_users <= 0) {
    throw std::invalid_argument("swap and user counts must be positive");
  }
  SwapQueue queue;
  for (int k = 0; k < count; ++k) {
    SwapOrder order;
    order.tolerance = sample_truncated_normal(tolerance, rng);
    order.urgency = sample_truncated_normal(urgency, rng);
    order.user_id = static_cast<int>(rng.index(static_cast<std::uint64_t>(num_users)));
    order.stream = rng.bits();
    queue.push_back(order);
  }
  return queue;
}

SwapQueue generate_swaps(int count, const TruncatedNormal& tolerance, int num_users, Rng& rng) {
  return generate_swaps(count, tolerance, num_users, rng, urgency_distribution());
}

SwapQueue generate_swaps(int count, ToleranceMode mode, int num_users, Rng& rng) {
  return generate_swaps(count, tolerance_distribution(mode), num_users, rng);
}

int choose_trade_side(const User& user, int picked, double fraction) {
  const int other = 1 - picked;
  if (user.balances[picked] < fraction * user.balances[other]) return other;
  return picked;
}

int choose_trade_side(const User& user, Rng& rng, double fraction) {
  return choose_trade_side(user, static_cast<int>(rng.index(2)), fraction);
}

void plan_trade(SwapOrder& order, const User& user, const UserBehavior& behavior, Rng& rng) {
  if (order.planned) return;
  order.in_index = choose_trade_side(user, rng, behavior.inversion_fraction);
  double amount = behavior.amount_min;
  if (behavior.amount_max > behavior.amount_min) {
    amount = rng.uniform(behavior.amount_min, behavior.amount_max);
  }
  order.amount = std::min(amount, user.balances[order.in_index]);
  order.planned = true;
}

SwapStatus user_decision(double price_impact_pct, SwapOrder& order, const UserBehavior& behavior,
                         Rng& rng) {
  if (price_impact_pct < order.effective_tolerance()) return SwapStatus::Success;
  // Urgent users are less likely to walk away.
  if (rng.bernoulli(behavior.cancel_probability / std::exp(order.urgency))) {
    return SwapStatus::Canceled;
  }
  hold_order(order, behavior);
  return SwapStatus::Holding;
}

AttemptResult attempt_swap(SwapOrder& order, User& user, PoolState& pool,
                           const CurveParams& params, const UserBehavior& behavior, Rng& rng) {
  if (order.user_id != user.id) {
    throw std::invalid_argument("swap order belongs to a different user");
  }
  plan_trade(order, user, behavior, rng);

  AttemptResult result;
  const int in = order.in_index;
  const int out = 1 - in;
  // Not affordable right now or not priceable: wait for the state to move.
  if (!(order.amount > 0.0) || order.amount > user.balances[in]) {
    hold_order(order, behavior);
    return result;
  }
  try {
    result.quote = amm::quote_swap(pool, params, in, out, order.amount);
  } catch (const amm::QuoteInfeasible&) {
    hold_order(order, behavior);
    return result;
  }

  result.status = user_decision(result.quote.price_impact_pct, order, behavior, rng);
  if (result.status == SwapStatus::Success) {
    amm::apply_quote(pool, result.quote, in, out);
    user.balances[in] -= result.quote.gross_in;
    user.balances[out] += result.quote.amount_out;
    result.amount = result.quote.gross_in;
    result.fee = result.quote.fee;
  }
  return result;
}

int discretize_slippage(double slippage_pct) {
  if (std::isnan(slippage_pct)) return kSlippageBuckets - 1;
  const double scaled = std::floor((slippage_pct + kSlippageRange) * kSlippageBuckets /
                                   (2.0 * kSlippageRange));
  return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(kSlippageBuckets - 1)));
}

std::uint32_t EnvObservation::key() const {
  return static_cast<std::uint32_t>(
      (slippage_bucket * amm::kFeeLevels + fee_level) * (amm::kMaxLeverage + 1) + leverage);
}

EnvObservation EnvObservation::from_key(std::uint32_t key) {
  constexpr std::uint32_t kLev = amm::kMaxLeverage + 1;
  EnvObservation obs;
  obs.leverage = static_cast<int>(key % kLev);
  key /= kLev;
  obs.fee_level = static_cast<int>(key % amm::kFeeLevels);
  obs.slippage_bucket = static_cast<int>(key / amm::kFeeLevels);
  return obs;
}

ScenarioConfig ScenarioConfig::normal() { return ScenarioConfig{}; }

ScenarioConfig ScenarioConfig::loose() {
  ScenarioConfig config;
  config.tolerance = tolerance_distribution(ToleranceMode::Loose);
  return config;
}

ScenarioConfig ScenarioConfig::high_liquidity() {
  ScenarioConfig config;
  config.user_balance = 18000.0;
  config.behavior.amount_min = 1000.0;
  config.behavior.amount_max = 18000.0;
  return config;
}

void ScenarioConfig::validate() const {
  require(num_users > 0, "num_users");
  require(swaps_per_epoch > 0, "swaps_per_epoch");
  require(pool_liquidity > 0.0 && std::isfinite(pool_liquidity), "pool_liquidity");
  require(user_balance >= 0.0 && std::isfinite(user_balance), "user_balance");
  require(tolerance.sigma > 0.0 && tolerance.lower < tolerance.upper, "tolerance");
  require(urgency.sigma > 0.0 && urgency.lower < urgency.upper, "urgency");
  require(behavior.amount_min > 0.0 && behavior.amount_max >= behavior.amount_min,
          "amount_min/amount_max");
  require(behavior.inversion_fraction >= 0.0 && behavior.inversion_fraction <= 1.0,
          "inversion_fraction");
  require(behavior.cancel_probability >= 0.0 && behavior.cancel_probability <= 1.0,
          "cancel_probability");
  require(behavior.urgency_bump >= 1.0, "urgency_bump");
  require(hold_offset >= 1, "hold_offset");
  require(max_tries >= 1, "max_tries");
}

Environment::Environment(ScenarioConfig scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  pool_ = PoolState::balanced(2, scenario_.pool_liquidity);
  users_ = generate_users(scenario_.num_users, scenario_.user_balance);
}

void Environment::set_scenario(ScenarioConfig scenario) {
  scenario.validate();
  scenario_ = std::move(scenario);
}

EnvObservation Environment::reset(Rng& rng) {
  pool_ = PoolState::balanced(2, scenario_.pool_liquidity);
  users_ = generate_users(scenario_.num_users, scenario_.user_balance);
  params_.fee_level = rng.integer(0, amm::kFeeLevels - 1);
  params_.leverage_coeff = rng.integer(amm::kMinLeverage, amm::kMaxLeverage);
  queue_ = generate_swaps(scenario_.swaps_per_epoch, scenario_.tolerance, scenario_.num_users,
                          rng, scenario_.urgency);
  return observe();
}

void Environment::set_params(const CurveParams& params) {
  if (!params.valid()) throw std::invalid_argument("curve parameters out of bounds");
  params_ = params;
}

Rng Environment::order_rng(const SwapOrder& order, std::uint64_t label) const {
  return Rng(derive_seed(order.stream, {label}));
}

const EnvObservation& Environment::observe() {
  observation_ = EnvObservation{kZeroSlippageBucket, params_.fee_level, params_.leverage_coeff};
  if (queue_.empty()) return observation_;

  SwapOrder& head = queue_.front();
  const User& user = users_[static_cast<std::size_t>(head.user_id)];
  if (!head.planned) {
    Rng rng = order_rng(head, 0);
    plan_trade(head, user, scenario_.behavior, rng);
  }
  if (head.amount > 0.0) {
    try {
      const amm::SwapQuote quote =
          amm::quote_swap(pool_, params_, head.in_index, 1 - head.in_index, head.amount);
      observation_.slippage_bucket = discretize_slippage(quote.slippage_pct);
    } catch (const amm::QuoteInfeasible&) {
      observation_.slippage_bucket = kSlippageBuckets - 1;
    }
  }
  return observation_;
}

StepInfo Environment::step() {
  StepInfo info;
  if (queue_.empty()) {
    info.observation = observe();
    info.done = true;
    return info;
  }
  SwapOrder order = queue_.front();
  queue_.pop_front();

  if (order.tries >= scenario_.max_tries) {
    info.status = SwapStatus::Canceled;
    info.expired = true;
    info.reward = -1.0;
  } else {
    User& user = users_[static_cast<std::size_t>(order.user_id)];
    Rng rng = order_rng(order, static_cast<std::uint64_t>(order.tries) + 1);
    const AttemptResult attempt =
        attempt_swap(order, user, pool_, params_, scenario_.behavior, rng);
    info.status = attempt.status;
    switch (attempt.status) {
      case SwapStatus::Success:
        info.reward = attempt.fee;
        info.fee = attempt.fee;
        break;
      case SwapStatus::Canceled:
        info.reward = -1.0;
        break;
      case SwapStatus::Holding:
        if (order.tries >= scenario_.max_tries) {
          info.status = SwapStatus::Canceled;
          info.expired = true;
          info.reward = -1.0;
        } else {
          requeue_held(queue_, order, scenario_.hold_offset);
        }
        break;
    }
  }
  info.observation = observe();
  info.done = queue_.empty();
  return info;
}

std::array<double, 2> Environment::token_totals() const {
  std::array<double, 2> totals{0.0, 0.0};
  for (std::size_t t = 0; t < 2; ++t) {
    for (const User& user : users_) totals[t] += user.balances[t];
    totals[t] += pool_.reserves[t];
    if (t < pool_.accrued_fees.size()) totals[t] += pool_.accrued_fees[t];
  }
  return totals;
}

}  // namespace ammrl::sim
