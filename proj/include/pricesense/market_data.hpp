#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pricesense/trade.hpp"

namespace pricesense {

// Price of a binary LMSR market before any trade (q = [0, 0]).
inline constexpr double kInitialPrice = 0.5;

struct MarketRecord {
  std::string market_id;
  std::optional<int> settlement;  // 0 or 1 once known
  Timestamp eap{};                // end of the active period
  std::vector<TradeRecord> trades;

  friend bool operator==(const MarketRecord&, const MarketRecord&) = default;
};

struct Dataset {
  std::vector<MarketRecord> markets;
  std::string provenance;
  std::size_t chain_warnings = 0;  // p0 != previous pm occurrences seen at load

  const MarketRecord* find(std::string_view market_id) const;
};

// Loads a trade-log CSV (market_id,trader_id,timestamp,p0,pm,shares,cost) and,
// when given, the market metadata CSV (market_id,settlement,eap_timestamp).
//
// Trades are ordered by timestamp with ties kept in file order. Broken price
// chaining is kept as written and counted in Dataset::chain_warnings. Markets
// without metadata get no settlement and an EAP equal to their last trade.
Dataset load_trade_log(const std::filesystem::path& trades_path,
                       const std::optional<std::filesystem::path>& metadata_path = std::nullopt);

// Writes reals with 17 significant digits so a reload is bit-exact.
void save_trade_log(const Dataset& dataset, const std::filesystem::path& trades_path,
                    const std::optional<std::filesystem::path>& metadata_path = std::nullopt);

// Checks the record-level and market-level invariants; throws ValidationError.
void validate_trade(const TradeRecord& trade);
void validate_market(const MarketRecord& market);

struct TraderTrade {
  int business_time = 0;  // 1-based rank among this trader's trades in the market
  double p0 = 0.0;
  double pm = 0.0;
};

std::vector<TraderTrade> trader_series(const MarketRecord& market, std::string_view trader_id);

// Distinct trader ids in order of first trade.
std::vector<std::string> traders_of(const MarketRecord& market);

struct TruncationParams {
  double max_hours_per_trade = 12.0;
  std::size_t min_trades = 25;
};

// Drops trades closest to settlement until the overall trade frequency is at
// least one trade per max_hours_per_trade. Returns nullopt when the market
// has (or falls to) fewer than min_trades trades.
std::optional<MarketRecord> truncate_market(const MarketRecord& market,
                                            const TruncationParams& params = {});

// Last final marginal price at or before eap - days_before * 24h, or the
// initial price when nothing traded by then.
double daily_price(const MarketRecord& market, int days_before);

}  // namespace pricesense
