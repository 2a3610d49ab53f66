#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pricesense/market_data.hpp"

namespace pricesense::testing {

inline Timestamp base_time() { return std::chrono::sys_days{std::chrono::year{2017} / 1 / 1}; }

// A chained market from (trader, pm) steps, one trade per `spacing`.
inline MarketRecord chained_market(const std::string& id, const std::vector<std::pair<std::string, double>>& steps,
                                   std::chrono::seconds spacing = std::chrono::hours{1}, int settlement = 1) {
  MarketRecord m;
  m.market_id = id;
  m.settlement = settlement;
  double price = 0.5;
  Timestamp t = base_time();
  for (const auto& [trader, pm] : steps) {
    TradeRecord r;
    r.market_id = id;
    r.trader_id = trader;
    r.timestamp = t;
    r.p0 = price;
    r.pm = pm;
    r.shares = pm > price ? 1.0 : -1.0;
    r.cost = 0.5;
    r.sequence = m.trades.size();
    m.trades.push_back(r);
    price = pm;
    t += spacing;
  }
  m.eap = m.trades.empty() ? base_time() : m.trades.back().timestamp;
  return m;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pricesense_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pricesense::testing
