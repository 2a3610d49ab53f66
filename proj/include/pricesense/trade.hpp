#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace pricesense {

using Timestamp = std::chrono::sys_seconds;

// One executed trade against the market maker. Prices are those of the
// "True" outcome; shares are signed in True-equivalent units (negative means
// the trader bought "False", which moves the True price down).
struct TradeRecord {
  std::string market_id;
  std::string trader_id;
  Timestamp timestamp{};
  double p0 = 0.5;  // offer price before the trade
  double pm = 0.5;  // final marginal price after the trade
  double shares = 0.0;
  double cost = 0.0;
  std::uint64_t sequence = 0;  // tie-breaker for equal timestamps

  double price_impact() const { return pm - p0; }

  friend bool operator==(const TradeRecord&, const TradeRecord&) = default;
};

// ISO-8601 UTC, second resolution: 2016-11-08T23:59:59Z
std::string format_timestamp(Timestamp t);
// Throws std::invalid_argument on malformed input.
Timestamp parse_timestamp(std::string_view text);

}  // namespace pricesense
