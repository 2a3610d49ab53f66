#include "pricesense/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "pricesense/errors.hpp"

namespace pricesense {

namespace {

constexpr std::string_view kTradeHeader = "market_id,trader_id,timestamp,p0,pm,shares,cost";
constexpr std::string_view kMetadataHeader = "market_id,settlement,eap_timestamp";
constexpr double kChainTolerance = 1e-9;

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_real(std::string_view text, const std::string& file, std::size_t line, const char* column) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(file, line, std::string("bad number in column ") + column + ": '" + std::string(text) + "'");
  }
  return value;
}

// Reads non-empty lines (CR stripped), checking the header. Returns (line number, text).
std::vector<std::pair<std::size_t, std::string>> read_rows(const std::filesystem::path& path,
                                                           std::string_view header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::string line;
  std::size_t number = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (number == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!saw_header) {
      if (line != header) {
        throw ParseError(path.string(), number, "expected header '" + std::string(header) + "'");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    rows.emplace_back(number, line);
  }
  if (!saw_header) throw ParseError(path.string(), 1, "missing header");
  return rows;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same_sign(double a, double b) { return (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0); }

}  // namespace

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const sys_days day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail = 0;
  const std::string copy(text);
  if (text.size() != 20 ||
      std::sscanf(copy.c_str(), "%4d-%2u-%2uT%2u:%2u:%2u%c", &y, &mo, &d, &h, &mi, &s, &tail) != 7 ||
      tail != 'Z' || copy[4] != '-' || copy[7] != '-' || copy[10] != 'T') {
    throw std::invalid_argument("timestamp must look like 2016-11-08T23:59:59Z: '" + copy + "'");
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw std::invalid_argument("timestamp out of range: '" + copy + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

const MarketRecord* Dataset::find(std::string_view market_id) const {
  for (const auto& m : markets) {
    if (m.market_id == market_id) return &m;
  }
  return nullptr;
}

void validate_trade(const TradeRecord& t) {
  auto in_open_unit = [](double p) { return std::isfinite(p) && p > 0.0 && p < 1.0; };
  if (!in_open_unit(t.p0) || !in_open_unit(t.pm)) {
    throw ValidationError("trade by " + t.trader_id + " in " + t.market_id +
                          ": prices must lie strictly inside (0, 1)");
  }
  if (!std::isfinite(t.shares) || !std::isfinite(t.cost)) {
    throw ValidationError("trade by " + t.trader_id + " in " + t.market_id + ": non-finite shares or cost");
  }
  const double impact = t.pm - t.p0;
  if (t.shares != 0.0 && impact != 0.0 && !same_sign(impact, t.shares)) {
    throw ValidationError("trade by " + t.trader_id + " in " + t.market_id +
                          ": share sign disagrees with price movement");
  }
}

void validate_market(const MarketRecord& m) {
  if (m.settlement && *m.settlement != 0 && *m.settlement != 1) {
    throw ValidationError("market " + m.market_id + ": settlement must be 0 or 1");
  }
  for (std::size_t k = 0; k < m.trades.size(); ++k) {
    validate_trade(m.trades[k]);
    if (k > 0) {
      const auto& prev = m.trades[k - 1];
      const auto& cur = m.trades[k];
      if (cur.timestamp < prev.timestamp ||
          (cur.timestamp == prev.timestamp && cur.sequence < prev.sequence)) {
        throw ValidationError("market " + m.market_id + ": trades out of order");
      }
    }
  }
}

Dataset load_trade_log(const std::filesystem::path& trades_path,
                       const std::optional<std::filesystem::path>& metadata_path) {
  Dataset ds;
  ds.provenance = trades_path.string();
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_set<std::string> has_metadata_eap;
  const std::string trades_file = trades_path.string();

  if (metadata_path) {
    const std::string meta_file = metadata_path->string();
    for (const auto& [line, text] : read_rows(*metadata_path, kMetadataHeader)) {
      const auto f = split_csv(text);
      if (f.size() != 3) throw ParseError(meta_file, line, "expected 3 fields");
      MarketRecord m;
      m.market_id = std::string(f[0]);
      if (m.market_id.empty()) throw ParseError(meta_file, line, "empty market_id");
      if (f[1] == "0" || f[1] == "1") {
        m.settlement = f[1] == "1" ? 1 : 0;
      } else if (!f[1].empty()) {
        throw ParseError(meta_file, line, "settlement must be 0 or 1");
      }
      try {
        m.eap = parse_timestamp(f[2]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(meta_file, line, e.what());
      }
      if (!index.emplace(m.market_id, ds.markets.size()).second) {
        throw ValidationError("duplicate market_id " + m.market_id + " in " + meta_file);
      }
      has_metadata_eap.insert(m.market_id);
      ds.markets.push_back(std::move(m));
    }
  }

  for (const auto& [line, text] : read_rows(trades_path, kTradeHeader)) {
    const auto f = split_csv(text);
    if (f.size() != 7) throw ParseError(trades_file, line, "expected 7 fields, got " + std::to_string(f.size()));
    TradeRecord t;
    t.market_id = std::string(f[0]);
    t.trader_id = std::string(f[1]);
    if (t.market_id.empty() || t.trader_id.empty()) throw ParseError(trades_file, line, "empty identifier");
    try {
      t.timestamp = parse_timestamp(f[2]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(trades_file, line, e.what());
    }
    t.p0 = parse_real(f[3], trades_file, line, "p0");
    t.pm = parse_real(f[4], trades_file, line, "pm");
    t.shares = parse_real(f[5], trades_file, line, "shares");
    t.cost = parse_real(f[6], trades_file, line, "cost");
    try {
      validate_trade(t);
    } catch (const ValidationError& e) {
      throw ValidationError(trades_file + ":" + std::to_string(line) + ": " + e.what());
    }

    auto it = index.find(t.market_id);
    if (it == index.end()) {
      if (metadata_path) {
        throw ValidationError(trades_file + ":" + std::to_string(line) + ": market " + t.market_id +
                              " has no metadata row");
      }
      it = index.emplace(t.market_id, ds.markets.size()).first;
      ds.markets.push_back(MarketRecord{t.market_id, std::nullopt, {}, {}});
    }
    auto& trades = ds.markets[it->second].trades;
    t.sequence = trades.size();
    trades.push_back(std::move(t));
  }

  for (auto& m : ds.markets) {
    std::stable_sort(m.trades.begin(), m.trades.end(),
                     [](const TradeRecord& a, const TradeRecord& b) { return a.timestamp < b.timestamp; });
    for (std::size_t k = 0; k < m.trades.size(); ++k) {
      m.trades[k].sequence = k;
      if (k > 0 && std::abs(m.trades[k].p0 - m.trades[k - 1].pm) > kChainTolerance) ++ds.chain_warnings;
    }
    if (!has_metadata_eap.contains(m.market_id) && !m.trades.empty()) m.eap = m.trades.back().timestamp;
  }
  return ds;
}

void save_trade_log(const Dataset& dataset, const std::filesystem::path& trades_path,
                    const std::optional<std::filesystem::path>& metadata_path) {
  {
    std::ofstream out(trades_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + trades_path.string());
    out << kTradeHeader << '\n';
    for (const auto& m : dataset.markets) {
      for (const auto& t : m.trades) {
        out << t.market_id << ',' << t.trader_id << ',' << format_timestamp(t.timestamp) << ','
            << format_real(t.p0) << ',' << format_real(t.pm) << ',' << format_real(t.shares) << ','
            << format_real(t.cost) << '\n';
      }
    }
    if (!out.flush()) throw IoError("write failed for " + trades_path.string());
  }
  if (metadata_path) {
    std::ofstream out(*metadata_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + metadata_path->string());
    out << kMetadataHeader << '\n';
    for (const auto& m : dataset.markets) {
      out << m.market_id << ',' << (m.settlement ? std::to_string(*m.settlement) : std::string()) << ','
          << format_timestamp(m.eap) << '\n';
    }
    if (!out.flush()) throw IoError("write failed for " + metadata_path->string());
  }
}

std::vector<TraderTrade> trader_series(const MarketRecord& market, std::string_view trader_id) {
  std::vector<TraderTrade> series;
  for (const auto& t : market.trades) {
    if (t.trader_id == trader_id) {
      series.push_back({static_cast<int>(series.size()) + 1, t.p0, t.pm});
    }
  }
  return series;
}

std::vector<std::string> traders_of(const MarketRecord& market) {
  std::vector<std::string> ids;
  std::unordered_set<std::string_view> seen;
  for (const auto& t : market.trades) {
    if (seen.insert(t.trader_id).second) ids.push_back(t.trader_id);
  }
  return ids;
}

std::optional<MarketRecord> truncate_market(const MarketRecord& market, const TruncationParams& params) {
  const auto& trades = market.trades;
  std::size_t n = trades.size();
  while (true) {
    if (n < params.min_trades || n == 0) return std::nullopt;
    const double span_hours =
        std::chrono::duration<double, std::ratio<3600>>(trades[n - 1].timestamp - trades[0].timestamp).count();
    // (n - 1) / span >= 1 / max_hours, rearranged to avoid dividing by zero.
    if (span_hours <= static_cast<double>(n - 1) * params.max_hours_per_trade) break;
    --n;
  }
  if (n == trades.size()) return market;

  MarketRecord out{market.market_id, market.settlement, market.eap, {}};
  out.trades.assign(trades.begin(), trades.begin() + static_cast<std::ptrdiff_t>(n));
  // The active period now ends with the last surviving trade.
  out.eap = std::min(market.eap, out.trades.back().timestamp);
  return out;
}

double daily_price(const MarketRecord& market, int days_before) {
  const Timestamp cutoff = market.eap - std::chrono::hours{24} * days_before;
  const auto it = std::upper_bound(market.trades.begin(), market.trades.end(), cutoff,
                                   [](Timestamp c, const TradeRecord& t) { return c < t.timestamp; });
  if (it == market.trades.begin()) return kInitialPrice;
  return std::prev(it)->pm;
}

}  // namespace pricesense
