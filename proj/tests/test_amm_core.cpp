#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ammrl/amm_core.hpp"
#include "support/curve_oracle.hpp"

using namespace ammrl::amm;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Frozen from the 60-digit mpmath oracle in tests/oracles/curve_oracles.py.
constexpr double kD_15k_25k_A85 = 39992.207271991583963;
constexpr double kY_A85_x21000 = 19000.293035801379754;
constexpr double kOut_A42 = 997.71267969887941464;
constexpr double kSlip_A42 = 0.058832044587857893967;
constexpr double kImpact_A42 = 0.22873203011205853555;
constexpr double kOut_A0 = 950.83887743293504712;
constexpr double kSlip_A0 = 4.7541943871646752356;
constexpr double kImpact_A0 = 4.9161122567064952877;

}  // namespace

TEST_SUITE("amm_core") {
  TEST_CASE("invariant at the symmetric point and the product limit") {
    const std::vector<double> even{10000, 10000};
    CHECK(compute_d(even, 42).d_value == doctest::Approx(20000).epsilon(1e-12));
    const std::vector<double> skew{10000, 40000};
    CHECK(compute_d(skew, 0).d_value == doctest::Approx(40000).epsilon(1e-12));
  }

  TEST_CASE("invariant against the frozen high-precision value") {
    const std::vector<double> x{15000, 25000};
    const InvariantSolution sol = compute_d(x, 85);
    CHECK(rel(sol.d_value, kD_15k_25k_A85) < 1e-12);
    CHECK(sol.d_value < 40000.0);
    CHECK(relative_residual(x, 85, sol.d_value) <= kSolverTolerance);
  }

  TEST_CASE("output reserve examples") {
    const std::vector<double> x{10000, 10000};
    CHECK(solve_output_reserve(x, 10, 20000, 0, 1, 10000) == doctest::Approx(10000).epsilon(1e-12));
    CHECK(solve_output_reserve(x, 0, 20000, 0, 1, 20000) == doctest::Approx(5000).epsilon(1e-12));
    const std::vector<double> big{20000, 20000};
    CHECK(rel(solve_output_reserve(big, 85, 40000, 0, 1, 21000), kY_A85_x21000) < 1e-12);
  }

  TEST_CASE("fee split") {
    const FeeSplit a = apply_fee(1000, 0.30);
    CHECK(a.fee == doctest::Approx(3.0));
    CHECK(a.net_in == doctest::Approx(997.0));
    const FeeSplit b = apply_fee(1000, 0.04);
    CHECK(b.fee == doctest::Approx(0.4));
    CHECK(b.net_in == doctest::Approx(999.6));
    const FeeSplit c = apply_fee(0, 0.17);
    CHECK(c.fee == 0.0);
    CHECK(c.net_in == 0.0);
  }

  TEST_CASE("quotes on a balanced 20k pool") {
    const PoolState pool = PoolState::balanced(2, 20000);

    const SwapQuote q = quote_swap(pool, 42, 0.17, 0, 1, 1000);
    CHECK(q.fee == doctest::Approx(1.7).epsilon(1e-14));
    CHECK(q.net_in == doctest::Approx(998.3).epsilon(1e-14));
    CHECK(rel(q.amount_out, kOut_A42) < 1e-10);
    CHECK(rel(q.slippage_pct, kSlip_A42) < 1e-7);
    CHECK(rel(q.price_impact_pct, kImpact_A42) < 1e-9);

    const SwapQuote cp = quote_swap(pool, 0, 0.17, 0, 1, 1000);
    CHECK(rel(cp.amount_out, kOut_A0) < 1e-12);
    CHECK(rel(cp.slippage_pct, kSlip_A0) < 1e-10);
    CHECK(rel(cp.price_impact_pct, kImpact_A0) < 1e-10);

    // Tiny trade on the flattest allowed curve loses only the fee.
    const SwapQuote tiny = quote_swap(pool, 85, 0.04, 0, 1, 1);
    CHECK(tiny.price_impact_pct == doctest::Approx(0.04).epsilon(1e-3));
    CHECK(tiny.price_impact_pct > 0.04);
  }

  TEST_CASE("executing the 1000-unit quote moves reserves and fees") {
    const PoolState pool = PoolState::balanced(2, 20000);
    const SwapResult r = execute_swap(pool, CurveParams{42, 13}, 0, 1, 1000);
    CHECK(r.state.reserves[0] == doctest::Approx(20998.3).epsilon(1e-14));
    CHECK(rel(r.state.reserves[1], 20000.0 - kOut_A42) < 1e-12);
    CHECK(r.state.accrued_fees[0] == doctest::Approx(1.7).epsilon(1e-14));
    CHECK(r.state.accrued_fees[1] == 0.0);
  }

  TEST_CASE("zero-size swap is the identity") {
    const PoolState pool = PoolState::balanced(2, 20000);
    const SwapResult r = execute_swap(pool, 42, 0.17, 0, 1, 0);
    CHECK(r.state == pool);
    CHECK(r.quote == SwapQuote{});
  }

  TEST_CASE("opposite swaps do not retrace a curved invariant") {
    const PoolState start = PoolState::balanced(2, 20000);
    const SwapResult there = execute_swap(start, 42, 0.0, 0, 1, 3000);
    const SwapResult back = execute_swap(there.state, 42, 0.0, 1, 0, 3000);
    CHECK(back.state.reserves != start.reserves);
    CHECK(std::abs(back.state.reserves[0] - start.reserves[0]) > 1e-6);
  }

  TEST_CASE("limit-shape references") {
    const std::vector<double> x{10000, 10000};
    CHECK(reference_cpmm_quote(x, 10000, 0, 1) == doctest::Approx(5000));
    CHECK(reference_csmm_quote(x, 400, 0, 1) == doctest::Approx(400));
    const std::vector<double> thin{10000, 100};
    CHECK_THROWS_AS(reference_csmm_quote(thin, 400, 0, 1), QuoteInfeasible);
  }

  TEST_CASE("argument validation") {
    const std::vector<double> bad{10000, -1};
    CHECK_THROWS_AS(compute_d(bad, 42), std::invalid_argument);
    const std::vector<double> ok{10000, 10000};
    CHECK_THROWS_AS(compute_d(ok, -1), std::invalid_argument);
    const PoolState pool = PoolState::balanced(2, 20000);
    CHECK_THROWS_AS(quote_swap(pool, 42, 0.17, 0, 0, 10), std::invalid_argument);
    CHECK_THROWS_AS(quote_swap(pool, 42, 100.0, 0, 1, 10), std::invalid_argument);
    CHECK_FALSE(CurveParams{86, 0}.valid());
    CHECK_FALSE(CurveParams{10, 27}.valid());
    CHECK(CurveParams::fee_level_for(0.17) == 13);
    CHECK_THROWS_AS(CurveParams::fee_level_for(0.175), std::invalid_argument);
    CHECK_THROWS_AS(CurveParams::fee_level_for(0.31), std::invalid_argument);
  }

  TEST_CASE("fee level grid") {
    CHECK(CurveParams{0, 0}.fee_rate() == doctest::Approx(0.04));
    CHECK(CurveParams{0, 26}.fee_rate() == doctest::Approx(0.30));
    CHECK(kBaselineParams.fee_rate() == doctest::Approx(0.17));
    CHECK(kBaselineParams.leverage_coeff == 42);
  }

  TEST_CASE("property: invariant bounds and residual, two and three tokens") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> reserve(100.0, 100000.0);
    const double amps[] = {0, 1, 10, 42, 85, 1000};
    for (std::size_t n : {2u, 3u}) {
      for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> x(n);
        for (double& v : x) v = reserve(gen);
        const double amp = amps[trial % 6];
        const InvariantSolution sol = compute_d(x, amp);
        double s = 0.0, logp = 0.0;
        for (double v : x) {
          s += v;
          logp += std::log(v);
        }
        const double lower = static_cast<double>(n) * std::exp(logp / static_cast<double>(n));
        CHECK(sol.d_value >= lower * (1 - 1e-12));
        CHECK(sol.d_value <= s * (1 + 1e-12));
        CHECK(relative_residual(x, amp, sol.d_value) <= kSolverTolerance);
        CHECK(rel(sol.d_value, oracle::invariant(x, amp)) < 1e-8);
      }
    }
  }

  TEST_CASE("property: product limit matches the CPMM reference") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> reserve(100.0, 100000.0);
    std::uniform_real_distribution<double> frac(1e-4, 0.5);
    for (int trial = 0; trial < 500; ++trial) {
      const PoolState pool{{reserve(gen), reserve(gen)}, {0, 0}};
      const double net = frac(gen) * pool.reserves[0];
      const SwapQuote q = quote_swap(pool, 0, 0.0, 0, 1, net);
      CHECK(rel(q.amount_out, reference_cpmm_quote(pool.reserves, net, 0, 1)) < 1e-8);
    }
  }

  TEST_CASE("property: very flat curve matches the CSMM reference") {
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> liquidity(100.0, 100000.0);
    std::uniform_real_distribution<double> frac(1e-4, 0.25);
    for (int trial = 0; trial < 500; ++trial) {
      const PoolState pool = PoolState::balanced(2, liquidity(gen));
      const double net = frac(gen) * pool.reserves[0];
      const SwapQuote q = quote_swap(pool, 1e6, 0.0, 0, 1, net);
      CHECK(rel(q.amount_out, reference_csmm_quote(pool.reserves, net, 0, 1)) < 1e-3);
    }
  }

  TEST_CASE("property: output and price impact rise with trade size") {
    const PoolState pool{{20000, 14000}, {0, 0}};
    for (double amp : {0.0, 10.0, 42.0, 85.0}) {
      double prev_out = 0.0, prev_impact = -1.0;
      for (double gross = 50; gross <= 12000; gross *= 1.3) {
        const SwapQuote q = quote_swap(pool, amp, 0.17, 0, 1, gross);
        CHECK(q.amount_out > prev_out);
        CHECK(q.price_impact_pct > prev_impact);
        CHECK(q.price_impact_pct >= q.slippage_pct);
        CHECK(q.amount_out > 0.0);
        prev_out = q.amount_out;
        prev_impact = q.price_impact_pct;
      }
    }
  }

  TEST_CASE("property: swaps preserve the invariant and never shrink accrued fees") {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> size(1.0, 3000.0);
    std::uniform_int_distribution<int> side(0, 1), lev(0, 85), level(0, 26);
    PoolState pool = PoolState::balanced(2, 20000);
    std::vector<double> fees = pool.accrued_fees;
    for (int trial = 0; trial < 400; ++trial) {
      const CurveParams params{lev(gen), level(gen)};
      const std::size_t i = static_cast<std::size_t>(side(gen));
      const double d_before = compute_d(pool.reserves, params.leverage_coeff).d_value;
      SwapResult r;
      try {
        r = execute_swap(pool, params, i, 1 - i, size(gen));
      } catch (const QuoteInfeasible&) {
        continue;
      }
      const double d_after = compute_d(r.state.reserves, params.leverage_coeff).d_value;
      CHECK(rel(d_after, d_before) < 1e-8);
      for (std::size_t t = 0; t < 2; ++t) {
        CHECK(r.state.accrued_fees[t] >= fees[t]);
        CHECK(r.state.reserves[t] > 0.0);
      }
      pool = r.state;
      fees = pool.accrued_fees;
    }
  }

  TEST_CASE("three-token output solve agrees with the oracle") {
    const std::vector<double> x{12000, 30000, 21000};
    const double d = compute_d(x, 42).d_value;
    const double y = solve_output_reserve(x, 42, d, 2, 0, 23000);
    CHECK(rel(y, oracle::output_reserve(x, 42, d, 2, 0, 23000)) < 1e-9);
  }
}
