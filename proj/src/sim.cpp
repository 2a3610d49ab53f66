#include "pricesense/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "pricesense/errors.hpp"
#include "pricesense/random.hpp"

namespace pricesense::sim {

namespace {

constexpr double kPriceFloor = 0.01;
constexpr double kPriceCeiling = 0.99;
constexpr double kBankrupt = 1e-9;
// Target moves smaller than this are rounding noise at the price clip, not trades.
constexpr double kMinPriceMove = 1e-9;
constexpr std::uint64_t kSettlementStream = 0x5E771E;
constexpr std::uint64_t kTrueProbStream = 0x7B0B;
constexpr std::uint64_t kSignalStream = 0x516;

double clip_price(double p) { return std::clamp(p, kPriceFloor, kPriceCeiling); }

double arrival_weight(Arrival a, double progress) {
  switch (a) {
    case Arrival::Uniform:
      return 1.0;
    case Arrival::Early:
      return 2.0 * (1.0 - progress) + 1e-3;
    case Arrival::Late:
      break;
  }
  return 2.0 * progress + 1e-3;
}

Arrival parse_arrival(const std::string& s, const std::string& where) {
  if (s == "uniform") return Arrival::Uniform;
  if (s == "early") return Arrival::Early;
  if (s == "late") return Arrival::Late;
  throw UsageError(where + ": expected one of uniform, early, late");
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw UsageError(field + ": " + why); };
  if (!(liquidity_b > 0.0)) fail("liquidity_b", "must be positive");
  if (!(endowment >= 0.0)) fail("endowment", "must be non-negative");
  if (n_informed < 0) fail("n_informed", "must be non-negative");
  if (n_noise < 0) fail("n_noise", "must be non-negative");
  if (n_trades < 1) fail("n_trades", "must be at least 1");
  if (!(true_prob > 0.0 && true_prob < 1.0)) fail("true_prob", "must lie in (0, 1)");
  if (!(push_fraction > 0.0 && push_fraction <= 1.0)) fail("push_fraction", "must lie in (0, 1]");
  if (!(belief_noise_sd >= 0.0)) fail("belief_noise_sd", "must be non-negative");
  if (!(signal_sd >= 0.0)) fail("signal_sd", "must be non-negative");
  if (!(noise_sd > 0.0)) fail("noise_sd", "must be positive");
  if (!(dead_band >= 0.0)) fail("dead_band", "must be non-negative");
  if (!(informed_propensity > 0.0)) fail("informed_propensity", "must be positive");
  if (!(noise_propensity > 0.0)) fail("noise_propensity", "must be positive");
  if (!(mean_interarrival_hours > 0.0)) fail("mean_interarrival_hours", "must be positive");
}

std::vector<AgentSpec> make_agents(const SimConfig& config, std::string_view market_id) {
  std::vector<AgentSpec> agents;
  const std::string prefix(market_id);
  Rng signal_rng{derive_seed(config.seed, kSignalStream)};
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 1; k <= config.n_informed; ++k) {
    double belief = config.true_prob;
    if (config.signal_sd > 0.0) belief = clip_price(belief + config.signal_sd * gauss(signal_rng));
    agents.push_back({prefix + "-I" + std::to_string(k),
                      InformedAgent{belief, config.push_fraction, config.belief_noise_sd},
                      config.endowment, config.informed_propensity});
  }
  for (int k = 1; k <= config.n_noise; ++k) {
    agents.push_back({prefix + "-N" + std::to_string(k), NoiseAgent{config.noise_sd}, config.endowment,
                      config.noise_propensity});
  }
  return agents;
}

SimulatedMarket generate_market(const SimConfig& config, std::string market_id) {
  const auto agents = make_agents(config, market_id);
  return generate_market(config, agents, std::move(market_id));
}

SimulatedMarket generate_market(const SimConfig& config, std::span<const AgentSpec> agents,
                                std::string market_id) {
  config.validate();
  Rng rng = make_rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> gap(1.0 / config.mean_interarrival_hours);

  SimulatedMarket out;
  out.market.market_id = market_id;
  out.final_state = lmsr::MarketState::binary(config.liquidity_b);
  auto& state = out.final_state;
  for (const auto& a : agents) out.accounts.push_back(lmsr::TraderAccount::funded(a.trader_id, a.endowment));

  Timestamp now = config.start;
  auto& trades = out.market.trades;
  const auto target_count = static_cast<std::size_t>(config.n_trades);
  const std::size_t max_attempts = 50 * target_count + 100;
  std::vector<double> weights(agents.size());

  for (std::size_t attempt = 0; trades.size() < target_count; ++attempt) {
    if (attempt >= max_attempts) {
      out.short_of_trades = true;
      break;
    }
    const double progress = static_cast<double>(trades.size()) / static_cast<double>(target_count);
    double total = 0.0;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      double w = out.accounts[i].balance > kBankrupt ? agents[i].trade_propensity : 0.0;
      if (agents[i].informed()) w *= arrival_weight(config.informed_arrival, progress);
      weights[i] = w;
      total += w;
    }
    if (!(total > 0.0)) {
      out.short_of_trades = true;
      break;
    }
    const double u = unit(rng) * total;
    std::size_t who = agents.size();
    std::size_t last_eligible = 0;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      cumulative += weights[i];
      last_eligible = i;
      if (u < cumulative) {
        who = i;
        break;
      }
    }
    if (who == agents.size()) who = last_eligible;

    const double current = lmsr::marginal_price(state, lmsr::kTrue);
    double target = current;
    if (const auto* inf = std::get_if<InformedAgent>(&agents[who].kind)) {
      double belief = inf->belief;
      if (inf->belief_noise_sd > 0.0) belief += inf->belief_noise_sd * gauss(rng);
      belief = clip_price(belief);
      if (std::abs(belief - current) <= config.dead_band) continue;
      target = current + inf->push_fraction * (belief - current);
    } else {
      const auto& noise = std::get<NoiseAgent>(agents[who].kind);
      target = clip_price(current + noise.target_noise_sd * gauss(rng));
    }
    if (std::abs(target - current) < kMinPriceMove) continue;

    now += std::chrono::seconds{std::llround(gap(rng) * 3600.0)};
    auto result = lmsr::execute_trade(state, out.accounts[who], lmsr::kTrue, target, now);
    if (!result.executed()) continue;
    lmsr::redeem_complete_sets(state, out.accounts[who]);
    // Redemption is price-neutral up to rounding; keep the recorded chain exact.
    if (!trades.empty()) result.record.p0 = trades.back().pm;
    result.record.market_id = market_id;
    result.record.sequence = trades.size();
    trades.push_back(std::move(result.record));
    out.truth.kinds.emplace(agents[who].trader_id, agents[who].informed() ? AgentKind::Informed : AgentKind::Noise);
  }

  Rng settle_rng{derive_seed(config.seed, kSettlementStream)};
  out.truth.true_prob = config.true_prob;
  out.truth.settlement = unit(settle_rng) < config.true_prob ? 1 : 0;
  out.market.settlement = out.truth.settlement;
  out.market.eap = trades.empty() ? config.start : trades.back().timestamp;
  return out;
}

SimulatedDataset generate_dataset(std::span<const DatasetCell> grid, std::uint64_t seed) {
  SimulatedDataset out;
  out.dataset.provenance = "simulated seed=" + std::to_string(seed);
  std::size_t index = 0;
  for (const auto& cell : grid) {
    if (cell.true_prob_min > cell.true_prob_max) throw UsageError("true_prob_min exceeds true_prob_max");
    for (std::size_t k = 0; k < cell.n_markets; ++k, ++index) {
      SimConfig cfg = cell.base;
      cfg.seed = derive_seed(seed, index);
      Rng draw{derive_seed(cfg.seed, kTrueProbStream)};
      cfg.true_prob = cell.true_prob_min +
                      (cell.true_prob_max - cell.true_prob_min) * std::uniform_real_distribution<double>(0, 1)(draw);
      char id[32];
      std::snprintf(id, sizeof id, "m%04zu", index + 1);
      auto market = generate_market(cfg, id);
      if (market.short_of_trades) ++out.short_markets;
      out.dataset.markets.push_back(std::move(market.market));
      out.truths.push_back(std::move(market.truth));
    }
  }
  return out;
}

namespace {

using nlohmann::json;

const std::set<std::string> kConfigKeys{
    "liquidity_b",         "endowment",        "n_informed",    "n_noise",         "n_trades",
    "true_prob",           "true_prob_min",    "true_prob_max", "informed_arrival", "push_fraction",
    "belief_noise_sd",     "signal_sd",        "noise_sd",      "dead_band",       "informed_propensity",
    "noise_propensity",    "mean_interarrival_hours", "start",  "n_markets"};

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw UsageError(where + ": expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw UsageError(where + ": expected an integer");
  return j.get<int>();
}

// Applies the recognised keys of `obj` onto `cell`.
void apply(const json& obj, DatasetCell& cell, const std::string& path) {
  auto& c = cell.base;
  for (const auto& [key, value] : obj.items()) {
    const std::string where = path + key;
    if (key == "seed" || key == "cells") continue;
    if (!kConfigKeys.contains(key)) throw UsageError(where + ": unknown field");
    if (key == "liquidity_b") c.liquidity_b = number(value, where);
    else if (key == "endowment") c.endowment = number(value, where);
    else if (key == "n_informed") c.n_informed = integer(value, where);
    else if (key == "n_noise") c.n_noise = integer(value, where);
    else if (key == "n_trades") c.n_trades = integer(value, where);
    else if (key == "true_prob") cell.true_prob_min = cell.true_prob_max = number(value, where);
    else if (key == "true_prob_min") cell.true_prob_min = number(value, where);
    else if (key == "true_prob_max") cell.true_prob_max = number(value, where);
    else if (key == "informed_arrival") {
      if (!value.is_string()) throw UsageError(where + ": expected a string");
      c.informed_arrival = parse_arrival(value.get<std::string>(), where);
    }
    else if (key == "push_fraction") c.push_fraction = number(value, where);
    else if (key == "belief_noise_sd") c.belief_noise_sd = number(value, where);
    else if (key == "signal_sd") c.signal_sd = number(value, where);
    else if (key == "noise_sd") c.noise_sd = number(value, where);
    else if (key == "dead_band") c.dead_band = number(value, where);
    else if (key == "informed_propensity") c.informed_propensity = number(value, where);
    else if (key == "noise_propensity") c.noise_propensity = number(value, where);
    else if (key == "mean_interarrival_hours") c.mean_interarrival_hours = number(value, where);
    else if (key == "start") {
      if (!value.is_string()) throw UsageError(where + ": expected an ISO-8601 timestamp");
      try {
        c.start = parse_timestamp(value.get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw UsageError(where + ": " + e.what());
      }
    }
    else if (key == "n_markets") {
      const int n = integer(value, where);
      if (n < 0) throw UsageError(where + ": must be non-negative");
      cell.n_markets = static_cast<std::size_t>(n);
    }
  }
}

void check_cell(const DatasetCell& cell, const std::string& path) {
  try {
    SimConfig probe = cell.base;
    probe.true_prob = 0.5 * (cell.true_prob_min + cell.true_prob_max);
    probe.validate();
  } catch (const UsageError& e) {
    throw UsageError(path + e.what());
  }
  if (!(cell.true_prob_min > 0.0 && cell.true_prob_max < 1.0 && cell.true_prob_min <= cell.true_prob_max)) {
    throw UsageError(path + "true_prob: range must lie in (0, 1)");
  }
}

}  // namespace

SimulationPlan parse_plan(const nlohmann::json& doc) {
  if (!doc.is_object()) throw UsageError("config: expected a JSON object");
  if (!doc.contains("seed")) throw UsageError("seed: required field is missing");
  if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer()) {
    throw UsageError("seed: expected a non-negative integer");
  }
  SimulationPlan plan;
  plan.seed = doc["seed"].get<std::uint64_t>();

  DatasetCell defaults;
  defaults.n_markets = 1;
  apply(doc, defaults, "");
  if (!doc.contains("cells")) {
    check_cell(defaults, "");
    plan.cells.push_back(defaults);
    return plan;
  }
  if (!doc["cells"].is_array()) throw UsageError("cells: expected an array");
  for (std::size_t i = 0; i < doc["cells"].size(); ++i) {
    const std::string path = "cells[" + std::to_string(i) + "].";
    const auto& obj = doc["cells"][i];
    if (!obj.is_object()) throw UsageError(path.substr(0, path.size() - 1) + ": expected an object");
    DatasetCell cell = defaults;
    apply(obj, cell, path);
    check_cell(cell, path);
    plan.cells.push_back(cell);
  }
  return plan;
}

nlohmann::json plan_to_json(const SimulationPlan& plan) {
  json doc;
  doc["seed"] = plan.seed;
  doc["cells"] = json::array();
  for (const auto& cell : plan.cells) {
    const auto& c = cell.base;
    doc["cells"].push_back({{"n_markets", cell.n_markets},
                            {"liquidity_b", c.liquidity_b},
                            {"endowment", c.endowment},
                            {"n_informed", c.n_informed},
                            {"n_noise", c.n_noise},
                            {"n_trades", c.n_trades},
                            {"true_prob_min", cell.true_prob_min},
                            {"true_prob_max", cell.true_prob_max},
                            {"informed_arrival", std::string(to_string(c.informed_arrival))},
                            {"push_fraction", c.push_fraction},
                            {"belief_noise_sd", c.belief_noise_sd},
                            {"signal_sd", c.signal_sd},
                            {"noise_sd", c.noise_sd},
                            {"dead_band", c.dead_band},
                            {"informed_propensity", c.informed_propensity},
                            {"noise_propensity", c.noise_propensity},
                            {"mean_interarrival_hours", c.mean_interarrival_hours},
                            {"start", format_timestamp(c.start)}});
  }
  return doc;
}

void write_ground_truth_csv(const SimulatedDataset& sim, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "trader_id,market_id,kind\n";
  for (std::size_t i = 0; i < sim.dataset.markets.size(); ++i) {
    const auto& m = sim.dataset.markets[i];
    for (const auto& trader : traders_of(m)) {
      out << trader << ',' << m.market_id << ',' << to_string(sim.truths[i].kinds.at(trader)) << '\n';
    }
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

std::string_view to_string(Arrival a) {
  switch (a) {
    case Arrival::Uniform:
      return "uniform";
    case Arrival::Early:
      return "early";
    case Arrival::Late:
      break;
  }
  return "late";
}

std::string_view to_string(AgentKind k) { return k == AgentKind::Informed ? "Informed" : "Noise"; }

}  // namespace pricesense::sim
