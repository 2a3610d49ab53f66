#include "pricesense/metrics.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace pricesense::metrics {

namespace {

std::size_t grid_size(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("ROC step must lie in (0, 1]");
  const double k = std::round(1.0 / step);
  if (std::abs(k * step - 1.0) > 1e-9) throw std::invalid_argument("ROC step must divide 1 evenly");
  return static_cast<std::size_t>(k);
}

// Index of the highest threshold k / K that the score reaches.
std::size_t threshold_level(double score, std::size_t k_max) {
  if (!(score >= 0.0 && score <= 1.0)) throw std::invalid_argument("ROC scores must lie in [0, 1]");
  const double kd = static_cast<double>(k_max);
  auto k = static_cast<std::size_t>(std::floor(score * kd));
  k = std::min(k, k_max);
  while (k < k_max && static_cast<double>(k + 1) / kd <= score) ++k;
  while (k > 0 && static_cast<double>(k) / kd > score) --k;
  return k;
}

// Positive/negative counts per threshold level.
struct LevelHistogram {
  std::vector<std::size_t> pos, neg;
  std::size_t positives = 0, negatives = 0;

  explicit LevelHistogram(std::size_t k_max) : pos(k_max + 1, 0), neg(k_max + 1, 0) {}

  void add(double score, bool positive) {
    const std::size_t k = threshold_level(score, pos.size() - 1);
    if (positive) {
      ++pos[k];
      ++positives;
    } else {
      ++neg[k];
      ++negatives;
    }
  }

  RocCurve curve() const {
    const std::size_t k_max = pos.size() - 1;
    RocCurve out;
    out.positives = positives;
    out.negatives = negatives;
    out.points.reserve(k_max + 1);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i <= k_max; ++i) {
      const std::size_t k = k_max - i;
      tp += pos[k];
      fp += neg[k];
      out.points.push_back({static_cast<double>(k) / static_cast<double>(k_max),
                            static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
    }
    return out;
  }

  double area() const {
    // Same trapezoids as auc(curve()) without materializing the curve.
    double sum = 0.0;
    std::size_t tp = 0;
    for (std::size_t i = pos.size(); i-- > 0;) {
      const std::size_t tp_next = tp + pos[i];
      sum += static_cast<double>(neg[i]) * static_cast<double>(tp + tp_next);
      tp = tp_next;
    }
    return sum / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  }
};

// A market's daily prices N = 1..max_days before EAP.
struct MarketDaily {
  std::vector<double> prices;
  int settlement = 0;
};

MarketDaily daily_series(const MarketRecord& m, int max_days) {
  if (!m.settlement) throw DataError("market " + m.market_id + " has no settlement value");
  MarketDaily d;
  d.settlement = *m.settlement;
  d.prices.reserve(static_cast<std::size_t>(max_days));
  for (int n = 1; n <= max_days; ++n) d.prices.push_back(daily_price(m, n));
  return d;
}

std::optional<RocCurve> averaged_roc(std::span<const MarketDaily> markets, int max_days, double step) {
  const std::size_t k_max = grid_size(step);
  RocCurve avg;
  for (int day = 0; day < max_days; ++day) {
    LevelHistogram h(k_max);
    for (const auto& m : markets) h.add(m.prices[static_cast<std::size_t>(day)], m.settlement == 1);
    if (h.positives == 0 || h.negatives == 0) return std::nullopt;
    RocCurve c = h.curve();
    if (day == 0) {
      avg = c;
      continue;
    }
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      avg.points[i].fpr += c.points[i].fpr;
      avg.points[i].tpr += c.points[i].tpr;
    }
  }
  if (max_days > 1) {
    for (auto& p : avg.points) {
      p.fpr /= max_days;
      p.tpr /= max_days;
    }
  }
  return avg;
}

bool both_classes(std::span<const MarketDaily> markets) {
  bool pos = false, neg = false;
  for (const auto& m : markets) (m.settlement == 1 ? pos : neg) = true;
  return pos && neg;
}

struct GroupEstimate {
  double auc = 0.0;
  double se = 0.0;
  Interval ci;
  RocCurve roc;
};

GroupEstimate estimate_averaged_auc(std::span<const MarketDaily> markets, const ConvergenceOptions& opt,
                                    std::uint64_t seed) {
  GroupEstimate g;
  g.roc = *averaged_roc(markets, opt.max_days, opt.step);
  g.auc = auc(g.roc);
  BootstrapOptions b = opt.bootstrap;
  b.seed = seed;
  const auto reps = bootstrap_replicates(
      markets,
      [&](std::span<const MarketDaily> sample) -> std::optional<double> {
        const auto roc = averaged_roc(sample, opt.max_days, opt.step);
        if (!roc) return std::nullopt;
        return auc(*roc);
      },
      b);
  g.se = standard_deviation(reps);
  const double tail = (1.0 - b.level) / 2.0;
  g.ci = {std::min(quantile(reps, tail), g.auc), std::max(quantile(reps, 1.0 - tail), g.auc)};
  return g;
}

ZTest z_test(std::string a, std::string b, const GroupEstimate& ga, const GroupEstimate& gb) {
  ZTest t;
  t.group_a = std::move(a);
  t.group_b = std::move(b);
  t.difference = ga.auc - gb.auc;
  const double se = std::sqrt(ga.se * ga.se + gb.se * gb.se);
  if (se > 0.0) {
    t.z = t.difference / se;
    t.p_value = std::erfc(std::abs(t.z) / std::sqrt(2.0));
  } else {
    t.z = t.difference == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), t.difference);
    t.p_value = t.difference == 0.0 ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace

std::string_view to_string(KlOrder order) { return order == KlOrder::PostVsPre ? "pm||p0" : "p0||pm"; }

KlOrder parse_kl_order(std::string_view s) {
  if (s == "pm||p0" || s == "post-vs-pre") return KlOrder::PostVsPre;
  if (s == "p0||pm" || s == "pre-vs-post") return KlOrder::PreVsPost;
  throw UsageError("unknown KL order '" + std::string(s) + "' (expected post-vs-pre or pre-vs-post)");
}

double bernoulli_kl(double p, double q) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) {
    throw std::domain_error("bernoulli_kl arguments must lie strictly inside (0, 1)");
  }
  if (p == q) return 0.0;
  return std::max(0.0, p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q)));
}

double price_impact_kl(const TradeRecord& trade, KlOrder order) {
  return order == KlOrder::PostVsPre ? bernoulli_kl(trade.pm, trade.p0) : bernoulli_kl(trade.p0, trade.pm);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels, double step) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  LevelHistogram h(grid_size(step));
  for (std::size_t i = 0; i < scores.size(); ++i) h.add(scores[i], labels[i] != 0);
  if (h.positives == 0 || h.negatives == 0) {
    throw DegenerateStatisticError("ROC rates undefined: labels contain a single class");
  }
  return h.curve();
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  double fpr = 0.0, tpr = 0.0;
  for (const auto& p : curve.points) {
    area += (p.fpr - fpr) * (p.tpr + tpr) / 2.0;
    fpr = p.fpr;
    tpr = p.tpr;
  }
  return area;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double standard_deviation(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::optional<double> delta_auc(std::span<const ScoredTrade> trades, double step) {
  const std::size_t k_max = grid_size(step);
  LevelHistogram before(k_max), after(k_max);
  for (const auto& t : trades) {
    before.add(t.p0, t.settlement == 1);
    after.add(t.pm, t.settlement == 1);
  }
  if (before.positives == 0 || before.negatives == 0) return std::nullopt;
  return after.area() - before.area();
}

double delta_auc(std::span<const TradeRecord> trades, const std::map<std::string, int, std::less<>>& settlements,
                 double step) {
  std::vector<ScoredTrade> scored;
  scored.reserve(trades.size());
  for (const auto& t : trades) {
    const auto it = settlements.find(t.market_id);
    if (it == settlements.end()) throw DataError("no settlement for market " + t.market_id);
    scored.push_back({t.p0, t.pm, it->second, 0.0});
  }
  const auto d = delta_auc(std::span<const ScoredTrade>(scored), step);
  if (!d) throw DegenerateStatisticError("delta AUC undefined: trades span a single settlement class");
  return *d;
}

std::vector<ScoredTrade> scored_trades(const Dataset& dataset, KlOrder order) {
  std::vector<ScoredTrade> out;
  for (const auto& m : dataset.markets) {
    if (m.trades.empty()) continue;
    if (!m.settlement) throw DataError("market " + m.market_id + " has no settlement value");
    for (const auto& t : m.trades) out.push_back({t.p0, t.pm, *m.settlement, price_impact_kl(t, order)});
  }
  return out;
}

std::vector<double> kl_percentile_cutoffs(const Dataset& dataset, std::span<const double> quantiles,
                                          KlOrder order) {
  std::vector<double> kl;
  for (const auto& m : dataset.markets) {
    for (const auto& t : m.trades) kl.push_back(price_impact_kl(t, order));
  }
  if (kl.empty()) throw DegenerateStatisticError("no trades to take KL percentiles of");
  std::sort(kl.begin(), kl.end());
  std::vector<double> out;
  for (double q : quantiles) out.push_back(quantile(kl, q));
  return out;
}

ImpactCurve impact_curve(const Dataset& dataset, const detect::ClassificationTable& table,
                         std::span<const double> cutoffs, const ImpactOptions& options) {
  if (!std::is_sorted(cutoffs.begin(), cutoffs.end())) throw std::invalid_argument("KL cutoffs must be ascending");
  const auto labels = table.label_map();

  std::vector<ScoredTrade> ps, other;
  for (const auto& m : dataset.markets) {
    if (m.trades.empty()) continue;
    if (!m.settlement) throw DataError("market " + m.market_id + " has no settlement value");
    for (const auto& t : m.trades) {
      const ScoredTrade s{t.p0, t.pm, *m.settlement, price_impact_kl(t, options.kl_order)};
      const auto it = labels.find({t.trader_id, m.market_id});
      const bool sensitive = it != labels.end() && it->second == detect::Label::PriceSensitive;
      (sensitive ? ps : other).push_back(s);
    }
  }

  auto evaluate = [&](const std::vector<ScoredTrade>& pool, double cutoff, std::uint64_t seed) {
    std::vector<ScoredTrade> subset;
    for (const auto& s : pool) {
      if (s.kl >= cutoff) subset.push_back(s);
    }
    ImpactPoint point;
    point.n_trades = subset.size();
    point.delta_auc = delta_auc(std::span<const ScoredTrade>(subset), options.step);
    if (!point.delta_auc || options.bootstrap.n_resamples == 0) return point;
    BootstrapOptions b = options.bootstrap;
    b.seed = seed;
    try {
      const Interval ci = bootstrap_ci(
          std::span<const ScoredTrade>(subset),
          [&](std::span<const ScoredTrade> sample) { return delta_auc(sample, options.step); }, b);
      point.ci = ci;
    } catch (const DegenerateStatisticError&) {
      point.ci.reset();
    }
    return point;
  };

  ImpactCurve curve;
  curve.order = options.kl_order;
  for (std::size_t k = 0; k < cutoffs.size(); ++k) {
    ImpactRow row;
    row.kl_cutoff = cutoffs[k];
    row.price_sensitive = evaluate(ps, cutoffs[k], derive_seed(options.bootstrap.seed, 2 * k));
    row.other = evaluate(other, cutoffs[k], derive_seed(options.bootstrap.seed, 2 * k + 1));
    curve.rows.push_back(row);
  }
  return curve;
}

std::optional<RocCurve> averaged_daily_roc(std::span<const MarketRecord* const> markets, int max_days,
                                           double step) {
  std::vector<MarketDaily> daily;
  for (const auto* m : markets) daily.push_back(daily_series(*m, max_days));
  return averaged_roc(daily, max_days, step);
}

ConvergenceReport convergence_analysis(const Dataset& dataset, const detect::ClassificationTable& table,
                                       const ConvergenceOptions& options) {
  if (options.max_days < 1) throw std::invalid_argument("max_days must be at least 1");

  std::unordered_map<std::string, std::set<std::string>> sensitive;
  for (const auto& e : table.entries) {
    if (e.label == detect::Label::PriceSensitive) sensitive[e.market_id].insert(e.trader_id);
  }

  constexpr std::array kGroups{detect::PsGroup::Zero, detect::PsGroup::One, detect::PsGroup::TwoToThree,
                               detect::PsGroup::FourPlus};
  std::array<std::vector<MarketDaily>, 4> members;
  for (const auto& m : dataset.markets) {
    const auto it = sensitive.find(m.market_id);
    const std::size_t count = it == sensitive.end() ? 0 : it->second.size();
    members[static_cast<std::size_t>(detect::ps_group(count))].push_back(daily_series(m, options.max_days));
  }

  ConvergenceReport report;
  std::vector<std::pair<std::size_t, GroupEstimate>> included;
  for (std::size_t gi = 0; gi < kGroups.size(); ++gi) {
    const auto& mk = members[gi];
    const std::string name(detect::to_string(kGroups[gi]));
    if (mk.size() < 2 || !both_classes(mk)) {
      report.warnings.push_back("group " + name + " omitted: " + std::to_string(mk.size()) +
                                " market(s) or a single settlement class");
      continue;
    }
    GroupConvergence g;
    g.group = name;
    g.n_markets = mk.size();
    const std::size_t k_max = grid_size(options.step);
    for (int day = 0; day < options.max_days; ++day) {
      LevelHistogram h(k_max);
      for (const auto& m : mk) h.add(m.prices[static_cast<std::size_t>(day)], m.settlement == 1);
      g.daily_roc.push_back(h.curve());
      g.daily_auc.push_back(auc(g.daily_roc.back()));
    }
    const GroupEstimate est = estimate_averaged_auc(mk, options, derive_seed(options.bootstrap.seed, gi));
    g.averaged_roc = est.roc;
    g.averaged_auc = {est.auc, est.ci.low, est.ci.high, options.bootstrap.n_resamples};
    g.averaged_auc_se = est.se;
    report.groups.push_back(std::move(g));
    included.emplace_back(gi, est);
  }

  if (included.size() < 2) return report;

  for (std::size_t i = 0; i < included.size(); ++i) {
    for (std::size_t j = i + 1; j < included.size(); ++j) {
      const auto& [gi, ei] = included[i];
      const auto& [gj, ej] = included[j];
      report.z_tests.push_back(z_test(std::string(detect::to_string(kGroups[gj])),
                                      std::string(detect::to_string(kGroups[gi])), ej, ei));
    }
  }

  std::vector<MarketDaily> high = members[2];
  high.insert(high.end(), members[3].begin(), members[3].end());
  std::vector<MarketDaily> low = members[0];
  low.insert(low.end(), members[1].begin(), members[1].end());
  if (high.size() >= 2 && low.size() >= 2 && both_classes(high) && both_classes(low)) {
    const auto eh = estimate_averaged_auc(high, options, derive_seed(options.bootstrap.seed, 100));
    const auto el = estimate_averaged_auc(low, options, derive_seed(options.bootstrap.seed, 101));
    report.z_tests.push_back(z_test("2-3|4+", "0|1", eh, el));
  }
  return report;
}

}  // namespace pricesense::metrics
