#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pricesense/trade.hpp"

namespace pricesense::lmsr {

inline constexpr std::size_t kTrue = 0;
inline constexpr std::size_t kFalse = 1;

// Outstanding share quantities of a logarithmic market scoring rule market
// maker together with its liquidity parameter B.
struct MarketState {
  std::vector<double> quantities;
  double liquidity_b = 150.0;

  // Fresh binary market, q = [0, 0].
  static MarketState binary(double liquidity_b);
  static MarketState with_outcomes(std::size_t n, double liquidity_b);

  std::size_t outcomes() const { return quantities.size(); }
  bool is_binary() const { return quantities.size() == 2; }

  // Worst-case market-maker loss, B ln N.
  double subsidy_bound() const;

  // Throws std::invalid_argument if B <= 0, N < 2 or a quantity is not finite.
  void validate() const;
};

struct TraderAccount {
  std::string trader_id;
  double balance = 0.0;
  double endowment = 0.0;
  std::vector<double> holdings;  // shares per outcome

  static TraderAccount funded(std::string id, double endowment, std::size_t outcomes = 2);
};

std::vector<double> marginal_prices(const MarketState& state);
double marginal_price(const MarketState& state, std::size_t outcome);

// C(q) = B ln sum_j exp(q_j / B), via log-sum-exp.
double cost(const MarketState& state);

// C(q + delta e_outcome) - C(q). Evaluated relative to the current price so
// it stays accurate when |q| / B is large.
double trade_cost(const MarketState& state, std::size_t outcome, double delta_q);

// Shares of `outcome` to add so that its price becomes target_p. Binary only.
double shares_for_target_price(const MarketState& state, std::size_t outcome, double target_p);

enum class ExecutionStatus { Filled, PartiallyFilled, Rejected };

struct ExecutionResult {
  ExecutionStatus status = ExecutionStatus::Rejected;
  TradeRecord record;  // meaningful unless Rejected

  bool executed() const { return status != ExecutionStatus::Rejected; }
};

// Moves the price of `outcome` toward target_p on behalf of `account`.
//
// Lowering an outcome's price is done by buying the complementary outcome,
// which is exactly equivalent under the LMSR, so every execution has
// non-negative cost. If the full trade is unaffordable, the largest affordable
// trade in the same direction executes instead. A trader with no balance who
// asks for a price change is rejected and nothing is modified.
//
// The returned record's p0/pm/shares refer to the True outcome; market_id is
// left for the caller to fill in.
ExecutionResult execute_trade(MarketState& state, TraderAccount& account, std::size_t outcome,
                              double target_p, Timestamp timestamp);

// Sells every complete set (one share of each outcome) the account holds back
// to the market maker. C(q - m) = C(q) - m, so this pays exactly m and leaves
// prices unchanged. Returns m.
double redeem_complete_sets(MarketState& state, TraderAccount& account);

// Pays 1 per share of the winning outcome and clears holdings.
void settle(TraderAccount& account, std::size_t winning_outcome);

// Market-maker loss at settlement: payout to winning shares minus the cost
// collected between `initial` and `final_state`.
double market_maker_loss(const MarketState& initial, const MarketState& final_state,
                         std::size_t winning_outcome);

}  // namespace pricesense::lmsr
