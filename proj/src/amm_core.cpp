#include "ammrl/amm_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ammrl::amm {
namespace {

void check_reserves(std::span<const double> reserves) {
  if (reserves.size() < 2) {
    throw std::invalid_argument("pool needs at least two tokens");
  }
  for (double x : reserves) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("reserves must be positive and finite");
    }
  }
}

void check_pair(std::size_t n, std::size_t in_index, std::size_t out_index) {
  if (in_index >= n || out_index >= n || in_index == out_index) {
    throw std::invalid_argument("token indices must be distinct and in range");
  }
}

double amplification(double leverage, std::size_t n) {
  return leverage * std::pow(static_cast<double>(n), static_cast<double>(n));
}

// D^{n+1} / (n^n prod x), accumulated one reserve at a time to stay in range.
double d_product_term(std::span<const double> reserves, double d_value) {
  const double n = static_cast<double>(reserves.size());
  double term = d_value;
  for (double x : reserves) term = term * d_value / (x * n);
  return term;
}

struct Gap {
  double value;
  double scale;
};

Gap invariant_gap(double ann, double sum, double d_value, double product_term) {
  return {ann * sum + d_value - ann * d_value - product_term, ann * sum + d_value};
}

double constant_product_d(std::span<const double> reserves) {
  const double n = static_cast<double>(reserves.size());
  if (reserves.size() == 2) return 2.0 * std::sqrt(reserves[0] * reserves[1]);
  double log_sum = 0.0;
  for (double x : reserves) log_sum += std::log(x);
  return n * std::exp(log_sum / n);
}

}  // namespace

bool CurveParams::valid() const {
  return leverage_coeff >= kMinLeverage && leverage_coeff <= kMaxLeverage && fee_level >= 0 &&
         fee_level < kFeeLevels;
}

int CurveParams::fee_level_for(double fee_rate) {
  const double steps = (fee_rate - kMinFeeRate) / kFeeStep;
  const long level = std::lround(steps);
  if (std::abs(steps - static_cast<double>(level)) > 1e-6 || level < 0 || level >= kFeeLevels) {
    std::ostringstream msg;
    msg << "fee rate " << fee_rate << "% is not one of the 0.04..0.30 levels";
    throw std::invalid_argument(msg.str());
  }
  return static_cast<int>(level);
}

PoolState PoolState::balanced(std::size_t num_tokens, double liquidity) {
  return {std::vector<double>(num_tokens, liquidity), std::vector<double>(num_tokens, 0.0)};
}

double relative_residual(std::span<const double> reserves, double leverage, double d_value) {
  const double ann = amplification(leverage, reserves.size());
  const double sum = std::accumulate(reserves.begin(), reserves.end(), 0.0);
  const Gap gap = invariant_gap(ann, sum, d_value, d_product_term(reserves, d_value));
  return std::abs(gap.value) / gap.scale;
}

InvariantSolution compute_d(std::span<const double> reserves, double leverage) {
  check_reserves(reserves);
  if (!(leverage >= 0.0) || !std::isfinite(leverage)) {
    throw std::invalid_argument("leverage coefficient must be non-negative");
  }
  const std::size_t count = reserves.size();
  const double n = static_cast<double>(count);
  const double sum = std::accumulate(reserves.begin(), reserves.end(), 0.0);
  const double ann = amplification(leverage, count);

  auto finish = [&](double d, int iterations) {
    const Gap gap = invariant_gap(ann, sum, d, d_product_term(reserves, d));
    return InvariantSolution{d, iterations, std::abs(gap.value)};
  };
  auto acceptable = [&](const InvariantSolution& s) {
    const double scale = ann * sum + s.d_value;
    return std::isfinite(s.d_value) && s.residual <= kSolverTolerance * scale;
  };

  if (leverage == 0.0) {
    return finish(constant_product_d(reserves), 0);
  }

  double d = sum;
  int iterations = 0;
  while (iterations < kSolverMaxIterations) {
    ++iterations;
    const double dp = d_product_term(reserves, d);
    const double previous = d;
    d = (ann * sum + n * dp) * d / ((ann - 1.0) * d + (n + 1.0) * dp);
    if (!std::isfinite(d) || std::abs(d - previous) <= 1e-15 * d) break;
  }
  InvariantSolution newton = finish(d, iterations);
  if (acceptable(newton)) return newton;

  // f(lower) >= 0 and f(sum) <= 0 by AM-GM, so the root is bracketed.
  double lo = constant_product_d(reserves);
  double hi = sum;
  for (int k = 0; k < 400 && hi - lo > 1e-16 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    const Gap gap = invariant_gap(ann, sum, mid, d_product_term(reserves, mid));
    (gap.value > 0.0 ? lo : hi) = mid;
    ++iterations;
  }
  InvariantSolution bisected = finish(0.5 * (lo + hi), iterations);
  if (acceptable(bisected)) return bisected;
  throw SolverError("invariant solver failed to converge", bisected.residual);
}

double solve_output_reserve(std::span<const double> reserves, double leverage, double d_value,
                            std::size_t in_index, std::size_t out_index, double new_in_reserve) {
  check_reserves(reserves);
  check_pair(reserves.size(), in_index, out_index);
  if (!(new_in_reserve > 0.0) || !std::isfinite(new_in_reserve)) {
    throw std::invalid_argument("new input reserve must be positive");
  }
  if (!(d_value > 0.0) || !(leverage >= 0.0)) {
    throw std::invalid_argument("invariant and leverage must be positive / non-negative");
  }
  const std::size_t count = reserves.size();
  const double n = static_cast<double>(count);
  const double ann = amplification(leverage, count);

  // Sum of the fixed reserves and D^n / (n^(n-1) prod_{k != j} x_k).
  double fixed_sum = 0.0;
  double partial = d_value;
  for (std::size_t k = 0; k < count; ++k) {
    if (k == out_index) continue;
    const double x = (k == in_index) ? new_in_reserve : reserves[k];
    fixed_sum += x;
    partial = partial * d_value / (x * n);
  }

  auto gap_at = [&](double y) {
    return invariant_gap(ann, fixed_sum + y, d_value, partial * d_value / (y * n));
  };
  auto acceptable = [&](double y) {
    if (!(y > 0.0) || !std::isfinite(y)) return false;
    const Gap gap = gap_at(y);
    return std::abs(gap.value) <= kSolverTolerance * gap.scale;
  };

  double y = 0.0;
  if (leverage == 0.0) {
    // prod x = (D/n)^n
    y = d_value / n;
    for (std::size_t k = 0; k < count; ++k) {
      if (k == out_index) continue;
      const double x = (k == in_index) ? new_in_reserve : reserves[k];
      y *= (d_value / n) / x;
    }
  } else {
    // y^2 + (b - D) y = c, iterated from y = D.
    const double c = partial * d_value / (ann * n);
    const double b = fixed_sum + d_value / ann;
    y = d_value;
    for (int k = 0; k < kSolverMaxIterations; ++k) {
      const double previous = y;
      y = (y * y + c) / (2.0 * y + b - d_value);
      if (!std::isfinite(y) || std::abs(y - previous) <= 1e-15 * y) break;
    }
  }
  if (acceptable(y)) return y;

  // The gap is strictly increasing in y and tends to -inf at 0+.
  double lo = 0.0;
  double hi = d_value;
  for (int k = 0; k < 200 && gap_at(hi).value <= 0.0; ++k) hi *= 2.0;
  for (int k = 0; k < 400 && hi - lo > 1e-16 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (gap_at(mid).value > 0.0 ? hi : lo) = mid;
  }
  y = 0.5 * (lo + hi);
  if (acceptable(y)) return y;
  throw QuoteInfeasible("no positive reserve satisfies the invariant for this trade");
}

FeeSplit apply_fee(double gross_in, double fee_rate) {
  const double fee = gross_in * fee_rate / 100.0;
  return {fee, gross_in - fee};
}

SwapQuote quote_swap(const PoolState& state, double leverage, double fee_rate,
                     std::size_t in_index, std::size_t out_index, double gross_in) {
  check_pair(state.num_tokens(), in_index, out_index);
  if (!(gross_in > 0.0) || !std::isfinite(gross_in)) {
    throw std::invalid_argument("swap input must be positive");
  }
  if (!(fee_rate >= 0.0) || !(fee_rate < 100.0)) {
    throw std::invalid_argument("fee rate must lie in [0, 100) percent");
  }
  const FeeSplit split = apply_fee(gross_in, fee_rate);
  const InvariantSolution solution = compute_d(state.reserves, leverage);
  const double new_out = solve_output_reserve(state.reserves, leverage, solution.d_value,
                                              in_index, out_index,
                                              state.reserves[in_index] + split.net_in);
  const double out = state.reserves[out_index] - new_out;
  if (!(out > 0.0)) {
    throw QuoteInfeasible("trade produces no output at current reserves");
  }
  SwapQuote quote;
  quote.gross_in = gross_in;
  quote.fee = split.fee;
  quote.net_in = split.net_in;
  quote.amount_out = out;
  quote.slippage_pct = (split.net_in - out) / split.net_in * 100.0;
  quote.price_impact_pct = (gross_in - out) / gross_in * 100.0;
  return quote;
}

SwapQuote quote_swap(const PoolState& state, const CurveParams& params, std::size_t in_index,
                     std::size_t out_index, double gross_in) {
  return quote_swap(state, params.leverage_coeff, params.fee_rate(), in_index, out_index,
                    gross_in);
}

SwapResult execute_swap(const PoolState& state, double leverage, double fee_rate,
                        std::size_t in_index, std::size_t out_index, double gross_in) {
  if (gross_in == 0.0) {
    check_pair(state.num_tokens(), in_index, out_index);
    return {state, SwapQuote{}};
  }
  const SwapQuote quote = quote_swap(state, leverage, fee_rate, in_index, out_index, gross_in);
  SwapResult result{state, quote};
  apply_quote(result.state, quote, in_index, out_index);
  return result;
}

void apply_quote(PoolState& state, const SwapQuote& quote, std::size_t in_index,
                 std::size_t out_index) {
  check_pair(state.num_tokens(), in_index, out_index);
  state.accrued_fees.resize(state.num_tokens(), 0.0);
  state.reserves[in_index] += quote.net_in;
  state.reserves[out_index] -= quote.amount_out;
  state.accrued_fees[in_index] += quote.fee;
}

SwapResult execute_swap(const PoolState& state, const CurveParams& params, std::size_t in_index,
                        std::size_t out_index, double gross_in) {
  return execute_swap(state, params.leverage_coeff, params.fee_rate(), in_index, out_index,
                      gross_in);
}

double reference_cpmm_quote(std::span<const double> reserves, double net_in,
                            std::size_t in_index, std::size_t out_index) {
  check_reserves(reserves);
  check_pair(reserves.size(), in_index, out_index);
  const double x = reserves[in_index];
  const double y = reserves[out_index];
  return y - x * y / (x + net_in);
}

double reference_csmm_quote(std::span<const double> reserves, double net_in,
                            std::size_t in_index, std::size_t out_index) {
  check_reserves(reserves);
  check_pair(reserves.size(), in_index, out_index);
  if (net_in >= reserves[out_index]) {
    throw QuoteInfeasible("constant-sum trade exceeds the output reserve");
  }
  return net_in;
}

}  // namespace ammrl::amm
