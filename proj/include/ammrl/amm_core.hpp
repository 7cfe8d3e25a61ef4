// Hybrid (constant-sum / constant-product) bonding curve math.
//
// All amounts are real-valued token units. Fee rates are expressed in
// percent, so a fee_rate of 0.17 takes 0.17% of the input.
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ammrl::amm {

inline constexpr int kMinLeverage = 0;
inline constexpr int kMaxLeverage = 85;
inline constexpr int kFeeLevels = 27;
inline constexpr double kMinFeeRate = 0.04;
inline constexpr double kFeeStep = 0.01;

/// Live protocol parameters controlled by an agent.
///
/// The fee is stored as a discrete level (0 -> 0.04%, 26 -> 0.30%) so that
/// repeated +/-1 moves never accumulate floating-point drift.
struct CurveParams {
  int leverage_coeff = 42;
  int fee_level = 13;

  double fee_rate() const { return kMinFeeRate + kFeeStep * fee_level; }
  bool valid() const;

  /// Nearest fee level for a rate in percent; throws std::invalid_argument
  /// when the rate is outside [0.04, 0.30] or not on the 0.01 grid.
  static int fee_level_for(double fee_rate);

  friend bool operator==(const CurveParams&, const CurveParams&) = default;
};

inline constexpr CurveParams kBaselineParams{42, 13};

struct PoolState {
  std::vector<double> reserves;
  std::vector<double> accrued_fees;

  static PoolState balanced(std::size_t num_tokens, double liquidity);
  std::size_t num_tokens() const { return reserves.size(); }

  friend bool operator==(const PoolState&, const PoolState&) = default;
};

struct SwapQuote {
  double gross_in = 0.0;
  double fee = 0.0;
  double net_in = 0.0;
  double amount_out = 0.0;
  double slippage_pct = 0.0;      // fee-exclusive: (net_in - out) / net_in
  double price_impact_pct = 0.0;  // fee-inclusive: (gross_in - out) / gross_in

  friend bool operator==(const SwapQuote&, const SwapQuote&) = default;
};

struct InvariantSolution {
  double d_value = 0.0;
  int iterations = 0;
  double residual = 0.0;  // absolute invariant mismatch at d_value
};

struct FeeSplit {
  double fee = 0.0;
  double net_in = 0.0;
};

struct SwapResult {
  PoolState state;
  SwapQuote quote;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// The trade cannot be priced against the current reserves.
class QuoteInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSolverTolerance = 1e-10;
inline constexpr int kSolverMaxIterations = 256;

/// Invariant residual divided by the invariant's scale (A n^n S + D).
double relative_residual(std::span<const double> reserves, double leverage, double d_value);

/// Solves the hybrid invariant for D. Newton from D = sum(x), falling back
/// to bisection on [n (prod x)^(1/n), sum(x)]. A = 0 uses the closed form.
InvariantSolution compute_d(std::span<const double> reserves, double leverage);

/// Holds D and every reserve except `out_index` fixed, replaces reserve
/// `in_index` by `new_in_reserve`, and returns the reserve at `out_index`
/// that keeps the invariant satisfied.
double solve_output_reserve(std::span<const double> reserves, double leverage, double d_value,
                            std::size_t in_index, std::size_t out_index, double new_in_reserve);

FeeSplit apply_fee(double gross_in, double fee_rate);

SwapQuote quote_swap(const PoolState& state, double leverage, double fee_rate,
                     std::size_t in_index, std::size_t out_index, double gross_in);
SwapQuote quote_swap(const PoolState& state, const CurveParams& params, std::size_t in_index,
                     std::size_t out_index, double gross_in);

/// Commits a quote: net input enters the curve, the fee is set aside in
/// accrued_fees. A zero-size swap returns the state unchanged.
SwapResult execute_swap(const PoolState& state, double leverage, double fee_rate,
                        std::size_t in_index, std::size_t out_index, double gross_in);
SwapResult execute_swap(const PoolState& state, const CurveParams& params, std::size_t in_index,
                        std::size_t out_index, double gross_in);

/// In-place commit of a quote previously computed on `state`.
void apply_quote(PoolState& state, const SwapQuote& quote, std::size_t in_index,
                 std::size_t out_index);

// Limit-shape references.
double reference_cpmm_quote(std::span<const double> reserves, double net_in,
                            std::size_t in_index, std::size_t out_index);
double reference_csmm_quote(std::span<const double> reserves, double net_in,
                            std::size_t in_index, std::size_t out_index);

}  // namespace ammrl::amm
