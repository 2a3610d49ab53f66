#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "pricesense/lmsr.hpp"
#include "pricesense/market_data.hpp"

namespace pricesense::sim {

// Trades toward a private belief: when the price is more than the dead-band
// away from its (noise-perturbed) belief, it targets
// price + push_fraction * (belief - price).
struct InformedAgent {
  double belief = 0.5;
  double push_fraction = 1.0;
  double belief_noise_sd = 0.0;
};

// Targets clip(price + N(0, target_noise_sd), 0.01, 0.99).
struct NoiseAgent {
  double target_noise_sd = 0.05;
};

struct AgentSpec {
  std::string trader_id;
  std::variant<InformedAgent, NoiseAgent> kind;
  double endowment = 1000.0;
  double trade_propensity = 1.0;

  bool informed() const { return std::holds_alternative<InformedAgent>(kind); }
};

enum class Arrival { Uniform, Early, Late };

struct SimConfig {
  double liquidity_b = 150.0;
  double endowment = 1000.0;
  int n_informed = 0;
  int n_noise = 0;
  int n_trades = 1;
  double true_prob = 0.5;
  std::uint64_t seed = 0;
  Arrival informed_arrival = Arrival::Uniform;

  double push_fraction = 1.0;
  double belief_noise_sd = 0.0;
  double signal_sd = 0.0;  // sd of each informed agent's persistent private bias on p*
  double noise_sd = 0.05;
  double dead_band = 0.01;
  double informed_propensity = 1.0;
  double noise_propensity = 1.0;
  double mean_interarrival_hours = 1.0;
  Timestamp start = std::chrono::sys_days{std::chrono::year{2016} / 1 / 1};

  // Throws UsageError naming the offending field.
  void validate() const;
};

enum class AgentKind { Informed, Noise };

struct GroundTruth {
  std::map<std::string, AgentKind> kinds;  // every participating trader
  double true_prob = 0.5;
  int settlement = 0;
};

struct SimulatedMarket {
  MarketRecord market;
  GroundTruth truth;
  bool short_of_trades = false;  // stopped early: agents bankrupt or idle
  std::vector<lmsr::TraderAccount> accounts;
  lmsr::MarketState final_state;
};

// Agents described by the config: informed first, then noise. Ids are
// "<market_id>-I<k>" and "<market_id>-N<k>".
std::vector<AgentSpec> make_agents(const SimConfig& config, std::string_view market_id);

SimulatedMarket generate_market(const SimConfig& config, std::span<const AgentSpec> agents,
                                std::string market_id);
SimulatedMarket generate_market(const SimConfig& config, std::string market_id = "m0");

// One cell of an experiment grid: n_markets markets sharing a base config,
// each with its true probability drawn uniformly from [true_prob_min, true_prob_max].
struct DatasetCell {
  SimConfig base;
  double true_prob_min = 0.5;
  double true_prob_max = 0.5;
  std::size_t n_markets = 0;
};

struct SimulatedDataset {
  Dataset dataset;
  std::vector<GroundTruth> truths;  // parallel to dataset.markets
  std::size_t short_markets = 0;
};

// Markets are independent and seeded from (seed, running market index).
SimulatedDataset generate_dataset(std::span<const DatasetCell> grid, std::uint64_t seed);

// JSON document: {"seed": ..., "liquidity_b": ..., "endowment": ...,
//   "cells": [{"n_markets": ..., "n_informed": ..., "n_noise": ..., ...}]}.
// Per-cell keys override top-level ones. "seed" is required.
struct SimulationPlan {
  std::uint64_t seed = 0;
  std::vector<DatasetCell> cells;
};

SimulationPlan parse_plan(const nlohmann::json& doc);
nlohmann::json plan_to_json(const SimulationPlan& plan);

// trader_id,market_id,kind
void write_ground_truth_csv(const SimulatedDataset& sim, const std::filesystem::path& path);

std::string_view to_string(Arrival a);
std::string_view to_string(AgentKind k);

}  // namespace pricesense::sim
