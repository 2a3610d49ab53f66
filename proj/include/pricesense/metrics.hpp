#pragma once

#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pricesense/detect.hpp"
#include "pricesense/errors.hpp"
#include "pricesense/market_data.hpp"
#include "pricesense/random.hpp"

namespace pricesense::metrics {

// Which way round the Bernoulli KL divergence measures price impact.
// PostVsPre is KL(pm || p0).
enum class KlOrder { PostVsPre, PreVsPost };

std::string_view to_string(KlOrder order);
KlOrder parse_kl_order(std::string_view s);

// p ln(p/q) + (1-p) ln((1-p)/(1-q)) in nats. Throws std::domain_error unless
// both arguments lie strictly inside (0, 1).
double bernoulli_kl(double p, double q);

double price_impact_kl(const TradeRecord& trade, KlOrder order = KlOrder::PostVsPre);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points are ordered by descending threshold, 1.0 down to 0.0 in fixed steps.
struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Score >= threshold counts as a positive call. Throws DegenerateStatisticError
// when the labels hold a single class.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels, double step = 0.05);

// Trapezoidal area under the (FPR, TPR) polyline, anchored at (0, 0).
double auc(const RocCurve& curve);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct AucResult {
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_resamples = 0;
};

struct BootstrapOptions {
  std::size_t n_resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

// Statistic recomputed on resamples (with replacement) of `units`. Resample r
// draws from its own generator seeded from (seed, r). A resample on which the
// statistic is undefined is redrawn, at most 10 times.
template <class Unit, class Statistic>
std::vector<double> bootstrap_replicates(std::span<const Unit> units, Statistic&& statistic,
                                         const BootstrapOptions& options) {
  if (units.empty()) throw std::invalid_argument("bootstrap needs at least one unit");
  constexpr int kMaxRedraws = 10;
  std::vector<double> replicates;
  replicates.reserve(options.n_resamples);
  std::vector<Unit> sample(units.size());
  for (std::size_t r = 0; r < options.n_resamples; ++r) {
    Rng rng{derive_seed(options.seed, r)};
    std::uniform_int_distribution<std::size_t> pick(0, units.size() - 1);
    std::optional<double> value;
    for (int attempt = 0; attempt <= kMaxRedraws && !value; ++attempt) {
      for (auto& u : sample) u = units[pick(rng)];
      value = statistic(std::span<const Unit>(sample));
    }
    if (!value) {
      throw DegenerateStatisticError("bootstrap statistic undefined after repeated redraws");
    }
    replicates.push_back(*value);
  }
  return replicates;
}

// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);
double standard_deviation(std::span<const double> values);

template <class Unit, class Statistic>
Interval bootstrap_ci(std::span<const Unit> units, Statistic&& statistic, const BootstrapOptions& options) {
  auto reps = bootstrap_replicates(units, std::forward<Statistic>(statistic), options);
  const double tail = (1.0 - options.level) / 2.0;
  return {quantile(reps, tail), quantile(reps, 1.0 - tail)};
}

// A trade reduced to what the information metrics need.
struct ScoredTrade {
  double p0 = 0.5;
  double pm = 0.5;
  int settlement = 0;
  double kl = 0.0;
};

// AUC(pm vs S) - AUC(p0 vs S) over one trade set; nullopt with one class.
std::optional<double> delta_auc(std::span<const ScoredTrade> trades, double step = 0.05);

// Same, keyed by market settlement. Throws DegenerateStatisticError with one
// settlement class and DataError if a market has no settlement.
double delta_auc(std::span<const TradeRecord> trades, const std::map<std::string, int, std::less<>>& settlements,
                 double step = 0.05);

std::vector<ScoredTrade> scored_trades(const Dataset& dataset, KlOrder order = KlOrder::PostVsPre);

// KL cutoffs at the given quantiles (fractions in [0, 1]) of the pooled
// price-impact distribution of all trades.
std::vector<double> kl_percentile_cutoffs(const Dataset& dataset, std::span<const double> quantiles,
                                          KlOrder order = KlOrder::PostVsPre);

struct ImpactPoint {
  std::optional<double> delta_auc;  // nullopt when the subset has one settlement class
  std::optional<Interval> ci;
  std::size_t n_trades = 0;
};

struct ImpactRow {
  double kl_cutoff = 0.0;
  ImpactPoint price_sensitive;
  ImpactPoint other;  // not price-sensitive, including undetermined traders
};

struct ImpactCurve {
  KlOrder order = KlOrder::PostVsPre;
  std::vector<ImpactRow> rows;
};

struct ImpactOptions {
  KlOrder kl_order = KlOrder::PostVsPre;
  double step = 0.05;
  BootstrapOptions bootstrap{2000, 0.95, 0};
};

// Cumulative filtration: each row keeps the trades whose KL impact is at least
// the cutoff, so subsets are nested. Cutoffs must be ascending.
ImpactCurve impact_curve(const Dataset& dataset, const detect::ClassificationTable& table,
                         std::span<const double> cutoffs, const ImpactOptions& options = {});

struct GroupConvergence {
  std::string group;  // "0", "1", "2-3", "4+"
  std::size_t n_markets = 0;
  std::vector<double> daily_auc;  // index N-1 holds the AUC N days before EAP
  std::vector<RocCurve> daily_roc;
  RocCurve averaged_roc;          // TPR/FPR averaged per threshold across days
  AucResult averaged_auc;
  double averaged_auc_se = 0.0;   // bootstrap standard error over markets
};

struct ZTest {
  std::string group_a;
  std::string group_b;
  double difference = 0.0;  // AUC_a - AUC_b
  double z = 0.0;
  double p_value = 1.0;     // two-sided
};

struct ConvergenceReport {
  std::vector<GroupConvergence> groups;
  std::vector<ZTest> z_tests;
  std::vector<std::string> warnings;
};

struct ConvergenceOptions {
  int max_days = 14;
  double step = 0.05;
  BootstrapOptions bootstrap{10000, 0.95, 0};
};

// Temporally averaged ROC for a set of markets (daily prices N = 1..max_days
// vs settlement). nullopt when the markets hold one settlement class.
std::optional<RocCurve> averaged_daily_roc(std::span<const MarketRecord* const> markets, int max_days,
                                           double step);

// Daily price ROC/AUC per price-sensitive-count group, temporally averaged
// ROC, and z-tests between groups (each pair, plus {2-3, 4+} vs {0, 1})
// using bootstrap standard errors over markets.
ConvergenceReport convergence_analysis(const Dataset& dataset, const detect::ClassificationTable& table,
                                       const ConvergenceOptions& options = {});

}  // namespace pricesense::metrics
