#include "pricesense/lmsr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pricesense/errors.hpp"

namespace pricesense::lmsr {

namespace {

double log_sum_exp(const std::vector<double>& v, std::size_t skip = std::numeric_limits<std::size_t>::max()) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != skip) m = std::max(m, v[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != skip) s += std::exp(v[i] - m);
  }
  return m + std::log(s);
}

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

std::vector<double> scaled(const MarketState& state) {
  std::vector<double> z(state.quantities.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = state.quantities[i] / state.liquidity_b;
  return z;
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

void require_probability(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in (0, 1)");
  }
}

}  // namespace

MarketState MarketState::binary(double liquidity_b) { return with_outcomes(2, liquidity_b); }

MarketState MarketState::with_outcomes(std::size_t n, double liquidity_b) {
  MarketState s{std::vector<double>(n, 0.0), liquidity_b};
  s.validate();
  return s;
}

double MarketState::subsidy_bound() const {
  return liquidity_b * std::log(static_cast<double>(quantities.size()));
}

void MarketState::validate() const {
  if (!(liquidity_b > 0.0) || !std::isfinite(liquidity_b)) {
    throw std::invalid_argument("liquidity_b must be positive and finite");
  }
  if (quantities.size() < 2) throw std::invalid_argument("a market needs at least two outcomes");
  for (double q : quantities) {
    if (!std::isfinite(q)) throw std::invalid_argument("share quantities must be finite");
  }
}

TraderAccount TraderAccount::funded(std::string id, double endowment, std::size_t outcomes) {
  return TraderAccount{std::move(id), endowment, endowment, std::vector<double>(outcomes, 0.0)};
}

std::vector<double> marginal_prices(const MarketState& state) {
  std::vector<double> z = scaled(state);
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

double marginal_price(const MarketState& state, std::size_t outcome) {
  return marginal_prices(state).at(outcome);
}

double cost(const MarketState& state) { return state.liquidity_b * log_sum_exp(scaled(state)); }

double trade_cost(const MarketState& state, std::size_t outcome, double delta_q) {
  if (outcome >= state.outcomes()) throw std::out_of_range("outcome index out of range");
  if (delta_q == 0.0) return 0.0;

  // C(q + d e_i) - C(q) = B ln(p_i e^{d/B} + sum_{j != i} p_j)
  const std::vector<double> z = scaled(state);
  const double lse = log_sum_exp(z);
  const double log_p = z[outcome] - lse;
  const double d = delta_q / state.liquidity_b;
  if (std::abs(d) < 1.0) {
    return state.liquidity_b * std::log1p(std::exp(log_p) * std::expm1(d));
  }
  const double log_rest = log_sum_exp(z, outcome) - lse;
  return state.liquidity_b * log_add_exp(log_p + d, log_rest);
}

double shares_for_target_price(const MarketState& state, std::size_t outcome, double target_p) {
  if (!state.is_binary()) {
    throw UnsupportedOperation("shares_for_target_price is defined for binary markets only");
  }
  if (outcome >= 2) throw std::out_of_range("outcome index out of range");
  require_probability(target_p, "target price");
  // In a binary market logit(p_i) = (q_i - q_j) / B exactly.
  const double gap = state.quantities[outcome] - state.quantities[1 - outcome];
  return state.liquidity_b * logit(target_p) - gap;
}

ExecutionResult execute_trade(MarketState& state, TraderAccount& account, std::size_t outcome,
                              double target_p, Timestamp timestamp) {
  const double desired = shares_for_target_price(state, outcome, target_p);
  if (account.holdings.size() != state.outcomes()) account.holdings.resize(state.outcomes(), 0.0);

  ExecutionResult result;
  result.record.trader_id = account.trader_id;
  result.record.timestamp = timestamp;
  result.record.p0 = marginal_price(state, kTrue);

  if (desired == 0.0) {
    result.status = ExecutionStatus::Filled;
    result.record.pm = result.record.p0;
    return result;
  }

  const std::size_t bought = desired > 0.0 ? outcome : 1 - outcome;
  double amount = std::abs(desired);
  double price = trade_cost(state, bought, amount);
  result.status = ExecutionStatus::Filled;

  if (price > account.balance) {
    if (account.balance <= 0.0) return ExecutionResult{};
    // Largest affordable trade in the same direction. Cost is monotone in the
    // amount bought, so bisection converges.
    double lo = 0.0;
    double hi = amount;
    double lo_cost = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      const double c = trade_cost(state, bought, mid);
      if (c <= account.balance) {
        lo = mid;
        lo_cost = c;
      } else {
        hi = mid;
      }
      if (account.balance - lo_cost <= 1e-9 || hi - lo <= 0.0) break;
    }
    amount = lo;
    price = lo_cost;
    result.status = ExecutionStatus::PartiallyFilled;
  }

  state.quantities[bought] += amount;
  account.balance -= price;
  account.holdings[bought] += amount;

  result.record.pm = marginal_price(state, kTrue);
  result.record.shares = bought == kTrue ? amount : -amount;
  result.record.cost = price;
  return result;
}

double redeem_complete_sets(MarketState& state, TraderAccount& account) {
  if (account.holdings.size() != state.quantities.size()) {
    throw std::invalid_argument("account and market have different outcome counts");
  }
  const double sets = *std::min_element(account.holdings.begin(), account.holdings.end());
  if (!(sets > 0.0)) return 0.0;
  for (auto& h : account.holdings) h -= sets;
  for (auto& q : state.quantities) q -= sets;
  account.balance += sets;
  return sets;
}

void settle(TraderAccount& account, std::size_t winning_outcome) {
  account.balance += account.holdings.at(winning_outcome);
  std::fill(account.holdings.begin(), account.holdings.end(), 0.0);
}

double market_maker_loss(const MarketState& initial, const MarketState& final_state,
                         std::size_t winning_outcome) {
  const double payout = final_state.quantities.at(winning_outcome) - initial.quantities.at(winning_outcome);
  const double collected = cost(final_state) - cost(initial);
  return payout - collected;
}

}  // namespace pricesense::lmsr
