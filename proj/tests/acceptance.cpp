// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "pricesense/commands.hpp"
#include "pricesense/detect.hpp"
#include "pricesense/lmsr.hpp"
#include "pricesense/market_data.hpp"
#include "pricesense/metrics.hpp"
#include "pricesense/random.hpp"
#include "pricesense/sim.hpp"

using namespace pricesense;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Tolerances and limits.
constexpr double kLmsrTol = 1e-9;
constexpr double kAucTol = 0.005;
constexpr double kOlsLow = -0.55, kOlsHigh = -0.45;
constexpr double kTlsLow = -1.05, kTlsHigh = -0.95;
constexpr double kMinRecall = 0.8;
constexpr double kMaxFpr = 0.08;
constexpr double kZTestAlpha = 0.01;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- 1: LMSR

using Big = boost::multiprecision::cpp_dec_float_50;

Outcome lmsr_exactness() {
  Rng rng = make_rng(101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_price = 0.0, worst_cost = 0.0;
  for (int s = 0; s < 10000; ++s) {
    const std::size_t n = 2 + static_cast<std::size_t>(unit(rng) * 4);
    const double b = std::exp(std::log(1.0) + unit(rng) * std::log(1000.0));
    auto state = lmsr::MarketState::with_outcomes(n, b);
    for (auto& q : state.quantities) q = (unit(rng) * 2.0 - 1.0) * 20.0 * b;
    std::vector<Big> e(n);
    Big sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = boost::multiprecision::exp(Big(state.quantities[i]) / Big(b));
      sum += e[i];
    }
    const auto prices = lmsr::marginal_prices(state);
    for (std::size_t i = 0; i < n; ++i) {
      worst_price = std::max(worst_price, std::abs(prices[i] - static_cast<double>(e[i] / sum)));
    }
    worst_cost = std::max(worst_cost, std::abs(lmsr::cost(state) - static_cast<double>(Big(b) * log(sum))));
  }

  // Path independence and bounded market-maker loss.
  double worst_path = 0.0, worst_loss_excess = -1e300;
  for (int s = 0; s < 1000; ++s) {
    const double b = 10.0 + unit(rng) * 490.0;
    auto state = lmsr::MarketState::binary(b);
    const auto initial = state;
    std::vector<std::pair<std::size_t, double>> moves;
    const int len = 5 + static_cast<int>(unit(rng) * 45);
    for (int k = 0; k < len; ++k) moves.push_back({unit(rng) < 0.5 ? 0u : 1u, (unit(rng) * 2.0 - 1.0) * 3.0 * b});
    double paid = 0.0;
    for (const auto& [o, d] : moves) {
      paid += lmsr::trade_cost(state, o, d);
      state.quantities[o] += d;
    }
    const double direct = lmsr::cost(state) - lmsr::cost(initial);
    std::shuffle(moves.begin(), moves.end(), rng);
    auto again = initial;
    double paid_shuffled = 0.0;
    for (const auto& [o, d] : moves) {
      paid_shuffled += lmsr::trade_cost(again, o, d);
      again.quantities[o] += d;
    }
    const double scale = std::max(1.0, std::abs(direct));
    worst_path = std::max({worst_path, std::abs(paid - direct) / scale, std::abs(paid_shuffled - direct) / scale});

    // Budgeted traders pushing prices toward random targets.
    auto market = lmsr::MarketState::binary(b);
    std::vector<lmsr::TraderAccount> traders;
    for (int t = 0; t < 4; ++t) traders.push_back(lmsr::TraderAccount::funded("t" + std::to_string(t), 50.0 + 950.0 * unit(rng)));
    for (int k = 0; k < len; ++k) {
      auto& acct = traders[static_cast<std::size_t>(unit(rng) * 4) % 4];
      const double target = 0.001 + 0.998 * unit(rng);
      lmsr::execute_trade(market, acct, lmsr::kTrue, target, Timestamp{});
    }
    for (std::size_t w : {lmsr::kTrue, lmsr::kFalse}) {
      worst_loss_excess = std::max(worst_loss_excess, lmsr::market_maker_loss(initial, market, w) - b * std::log(2.0));
    }
  }
  Outcome o;
  o.pass = worst_price <= kLmsrTol && worst_cost <= kLmsrTol && worst_path <= kLmsrTol &&
           worst_loss_excess <= kLmsrTol;
  o.detail = "max price err " + fmt("%.2e", worst_price) + ", max cost err " + fmt("%.2e", worst_cost) +
             ", max path err " + fmt("%.2e", worst_path) + ", max loss - B ln2 " + fmt("%.3g", worst_loss_excess);
  return o;
}

// ----------------------------------------------------------------- 2: AUC

double mann_whitney(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1) continue;
    ++pos;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0) continue;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  for (int v : l) neg += v == 0 ? 1 : 0;
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

Outcome auc_equivalence() {
  Rng rng = make_rng(202);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<double> scores(50);
    std::vector<int> labels(50);
    do {
      for (std::size_t i = 0; i < 50; ++i) {
        labels[i] = unit(rng) < 0.5 ? 1 : 0;
        scores[i] = unit(rng);
      }
    } while (std::count(labels.begin(), labels.end(), 1) == 0 || std::count(labels.begin(), labels.end(), 0) == 0);
    const double grid = metrics::auc(metrics::roc_curve(scores, labels, 0.01));
    worst = std::max(worst, std::abs(grid - mann_whitney(scores, labels)));
  }
  return {worst <= kAucTol, "max |grid AUC - Mann-Whitney| " + fmt("%.5f", worst)};
}

// --------------------------------------------------------- 3: TLS vs OLS

Outcome errors_in_variables() {
  double ols_sum = 0.0, tls_sum = 0.0;
  constexpr int kSeeds = 100;
  for (int s = 0; s < kSeeds; ++s) {
    Rng rng = make_rng(derive_seed(303, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<detect::RegressionPoint> pts(10000);
    for (auto& p : pts) {
      const double x_true = g(rng);
      p.x = x_true + g(rng);
      p.y = -x_true + g(rng);
    }
    ols_sum += detect::ols_fit(pts).beta;
    tls_sum += detect::tls_fit(pts, {50, static_cast<std::uint64_t>(s)}).beta;
  }
  const double ols = ols_sum / kSeeds, tls = tls_sum / kSeeds;
  return {ols >= kOlsLow && ols <= kOlsHigh && tls >= kTlsLow && tls <= kTlsHigh,
          "mean OLS slope " + fmt("%.4f", ols) + ", mean TLS slope " + fmt("%.4f", tls)};
}

// ------------------------------------------------------- 4: detector

sim::SimConfig detector_config() {
  sim::SimConfig c;
  c.liquidity_b = 150.0;
  c.endowment = 1000.0;
  c.n_informed = 3;
  c.n_noise = 30;
  c.n_trades = 300;
  c.push_fraction = 1.0;
  c.belief_noise_sd = 0.02;
  return c;
}

Outcome detector_validity() {
  sim::DatasetCell cell{detector_config(), 0.1, 0.9, 200};
  const auto simulated = sim::generate_dataset(std::span(&cell, 1), 404);
  const auto table = detect::classify_dataset(simulated.dataset);
  std::map<std::string, const sim::GroundTruth*> truth_of;
  for (std::size_t i = 0; i < simulated.dataset.markets.size(); ++i) {
    truth_of[simulated.dataset.markets[i].market_id] = &simulated.truths[i];
  }
  std::size_t inf = 0, inf_ps = 0, noise = 0, noise_ps = 0, undetermined = 0;
  for (const auto& e : table.entries) {
    if (e.label == detect::Label::Undetermined) {
      ++undetermined;
      continue;
    }
    const bool informed = truth_of.at(e.market_id)->kinds.at(e.trader_id) == sim::AgentKind::Informed;
    const bool ps = e.label == detect::Label::PriceSensitive;
    (informed ? inf : noise)++;
    if (ps) (informed ? inf_ps : noise_ps)++;
  }
  const double recall = static_cast<double>(inf_ps) / static_cast<double>(inf);
  const double fpr = static_cast<double>(noise_ps) / static_cast<double>(noise);
  return {recall >= kMinRecall && fpr <= kMaxFpr,
          "recall " + fmt("%.3f", recall) + " (" + std::to_string(inf) + " informed pairs), FPR " + fmt("%.4f", fpr) +
              " (" + std::to_string(noise) + " noise pairs), undetermined " + std::to_string(undetermined)};
}

// ------------------------------------------------------- 5: impact curve

Outcome impact_curve_shape() {
  sim::DatasetCell cell{detector_config(), 0.02, 0.98, 1000};
  const auto simulated = sim::generate_dataset(std::span(&cell, 1), 505);
  const auto table = detect::classify_dataset(simulated.dataset);
  const std::vector<double> deciles{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto cutoffs = metrics::kl_percentile_cutoffs(simulated.dataset, deciles);
  metrics::ImpactOptions opt;
  opt.bootstrap = {2000, 0.95, 505};
  const auto curve = metrics::impact_curve(simulated.dataset, table, cutoffs, opt);
  bool ps_positive = true, ps_increasing = true, other_nonpositive = true, other_decreasing = true;
  std::string ps_series, other_series;
  for (std::size_t k = 0; k < curve.rows.size(); ++k) {
    const auto& r = curve.rows[k];
    if (!r.price_sensitive.delta_auc || !r.other.delta_auc) return {false, "undefined Delta AUC at a cutoff"};
    const double ps = *r.price_sensitive.delta_auc, other = *r.other.delta_auc;
    ps_series += fmt(" %+.4f", ps);
    other_series += fmt(" %+.4f", other);
    ps_positive &= ps > 0.0;
    other_nonpositive &= other <= 0.0;
    if (k > 0) {
      ps_increasing &= ps > *curve.rows[k - 1].price_sensitive.delta_auc;
      other_decreasing &= other < *curve.rows[k - 1].other.delta_auc;
    }
  }
  const auto& top = curve.rows.back();
  const bool disjoint = top.price_sensitive.ci->low > top.other.ci->high || top.other.ci->low > top.price_sensitive.ci->high;
  Outcome o;
  o.pass = ps_positive && ps_increasing && other_nonpositive && other_decreasing && disjoint;
  o.detail = "PS:" + ps_series + " | non-PS:" + other_series + " | top CIs PS [" +
             fmt("%.4f", top.price_sensitive.ci->low) + ", " + fmt("%.4f", top.price_sensitive.ci->high) +
             "] non-PS [" + fmt("%.4f", top.other.ci->low) + ", " + fmt("%.4f", top.other.ci->high) + "]";
  return o;
}

// ------------------------------------------------------- 6: convergence

// Informed agents hold private signals and move the price part of the way to
// their belief, so more of them means a better aggregated late price. True
// probabilities sit near the extremes, split evenly between the two tails.
sim::SimulatedDataset convergence_dataset(std::uint64_t seed) {
  sim::SimConfig base;
  base.n_noise = 6;
  base.n_trades = 300;
  base.noise_sd = 0.05;
  base.belief_noise_sd = 0.02;
  base.signal_sd = 0.3;
  base.push_fraction = 0.3;
  base.mean_interarrival_hours = 3.0;
  std::vector<sim::DatasetCell> cells;
  const std::vector<std::pair<int, std::size_t>> plan{{0, 40}, {1, 50}, {2, 15}, {3, 15}, {6, 16}, {10, 16}};
  for (const auto& [n_informed, n_markets] : plan) {
    base.n_informed = n_informed;
    cells.push_back({base, 0.02, 0.06, n_markets / 2});
    cells.push_back({base, 0.94, 0.98, n_markets - n_markets / 2});
  }
  return sim::generate_dataset(cells, seed);
}

Outcome convergence_ordering() {
  const auto simulated = convergence_dataset(606);
  Dataset truncated;
  for (const auto& m : simulated.dataset.markets) {
    if (auto t = truncate_market(m, {})) truncated.markets.push_back(std::move(*t));
  }
  const auto table = detect::classify_dataset(truncated);
  metrics::ConvergenceOptions opt;
  opt.bootstrap = {10000, 0.95, 606};
  const auto rep = metrics::convergence_analysis(truncated, table, opt);
  const std::vector<std::string> order{"4+", "2-3", "1", "0"};
  std::map<std::string, const metrics::GroupConvergence*> by;
  for (const auto& g : rep.groups) by[g.group] = &g;
  std::string counts;
  for (const auto& name : order) {
    counts += name + "=" + (by.contains(name) ? std::to_string(by[name]->n_markets) : "absent") + " ";
  }
  if (by.size() != order.size()) return {false, "missing groups: " + counts};
  bool ordered = true;
  std::string worst;
  for (int n = 1; n <= 7; ++n) {
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      const double hi = by[order[k]]->daily_auc[static_cast<std::size_t>(n - 1)];
      const double lo = by[order[k + 1]]->daily_auc[static_cast<std::size_t>(n - 1)];
      if (hi < lo) {
        ordered = false;
        worst += " N=" + std::to_string(n) + ":" + order[k] + "<" + order[k + 1];
      }
    }
  }
  const metrics::ZTest* pooled = nullptr;
  for (const auto& z : rep.z_tests) {
    if (z.group_a == "2-3|4+" && z.group_b == "0|1") pooled = &z;
  }
  if (pooled == nullptr) return {false, "pooled z-test missing"};
  std::string aucs;
  for (const auto& name : order) aucs += " " + name + fmt("=%.3f", by[name]->daily_auc[0]);
  Outcome o;
  o.pass = ordered && pooled->difference > 0.0 && pooled->p_value < kZTestAlpha;
  o.detail = std::to_string(truncated.markets.size()) + " markets, groups " + counts + "| N=1 AUC" + aucs +
             " | pooled diff " + fmt("%.3f", pooled->difference) + ", p " + fmt("%.2e", pooled->p_value) +
             (ordered ? "" : " | order violations:" + worst);
  return o;
}

// ------------------------------------------------------- 7: truncation

Outcome truncation_determinism() {
  MarketRecord m;
  m.market_id = "tail";
  m.settlement = 1;
  const Timestamp t0 = std::chrono::sys_days{std::chrono::year{2017} / 3 / 1};
  auto at = [&](long hours) { return t0 + std::chrono::hours{hours}; };
  double price = 0.5;
  auto add = [&](long hours) {
    TradeRecord t;
    t.market_id = "tail";
    t.trader_id = "u" + std::to_string(m.trades.size() % 5);
    t.timestamp = at(hours);
    t.p0 = price;
    price = price == 0.5 ? 0.55 : 0.5;
    t.pm = price;
    t.sequence = m.trades.size();
    m.trades.push_back(t);
  };
  for (long h = 0; h < 30; ++h) add(h);
  for (long k = 1; k <= 5; ++k) add(29 + 144 * k);
  m.eap = m.trades.back().timestamp;

  // Span 749h > 34*12, 605h > 33*12, 461h > 32*12, then 317h <= 31*12: keep 32 trades.
  MarketRecord expected = m;
  expected.trades.resize(32);
  expected.eap = at(29 + 288);
  const auto got = truncate_market(m, {});
  bool ok = got && *got == expected;

  MarketRecord short_market = m;
  short_market.trades.resize(10);
  ok &= !truncate_market(short_market, {}).has_value();

  const auto simulated = convergence_dataset(707);
  std::size_t checked = 0, changed = 0;
  bool idempotent = true;
  for (const auto& market : simulated.dataset.markets) {
    const auto once = truncate_market(market, {});
    if (!once) continue;
    ++checked;
    changed += once->trades.size() != market.trades.size() ? 1 : 0;
    const auto twice = truncate_market(*once, {});
    idempotent &= twice && *twice == *once;
  }
  return {ok && idempotent, std::string("hand-traced market ") + (ok ? "matches" : "differs") + ", idempotent on " +
                                std::to_string(checked) + " markets (" + std::to_string(changed) + " truncated): " +
                                (idempotent ? "yes" : "no")};
}

// ------------------------------------------------------- 8: reproducibility

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome manifest_replay() {
  const fs::path root = fs::temp_directory_path() / ("pricesense_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"seed": 808, "n_trades": 200, "n_noise": 6, "belief_noise_sd": 0.05, "true_prob_min": 0.1,
              "true_prob_max": 0.9, "mean_interarrival_hours": 3,
              "cells": [{"n_markets": 12, "n_informed": 0}, {"n_markets": 12, "n_informed": 1},
                        {"n_markets": 12, "n_informed": 3}, {"n_markets": 12, "n_informed": 5}]})";
  }
  const fs::path sim_dir = root / "sim", tr_dir = root / "tr";
  std::vector<fs::path> manifests;
  manifests.push_back(sim_dir / cli::manifest_name(cli::cmd_simulate({root / "config.json", sim_dir})));
  manifests.push_back(tr_dir / cli::manifest_name(cli::cmd_truncate({sim_dir, tr_dir, {}})));
  cli::DetectArgs d;
  d.in_dir = d.out_dir = tr_dir;
  d.method = detect::FitMethod::Tls;
  d.tls_resamples = 200;
  d.seed = 8;
  manifests.push_back(tr_dir / cli::manifest_name(cli::cmd_detect(d)));
  for (auto analysis : {cli::Analysis::ImpactCurve, cli::Analysis::Convergence}) {
    cli::ReportArgs r;
    r.in_dir = r.out_dir = tr_dir;
    r.analysis = analysis;
    r.resamples = 300;
    r.seed = 88;
    manifests.push_back(tr_dir / cli::manifest_name(cli::cmd_report(r)));
  }

  std::size_t compared = 0;
  std::vector<std::string> mismatches;
  for (const auto& m : manifests) {
    const fs::path replay_dir = root / ("replay_" + m.stem().string());
    const auto manifest = cli::replay(m, replay_dir);
    for (const auto& name : manifest.at("outputs")) {
      const auto file = name.get<std::string>();
      ++compared;
      if (slurp(m.parent_path() / file) != slurp(replay_dir / file)) mismatches.push_back(file);
    }
    auto original = nlohmann::json::parse(slurp(m));
    auto replayed = nlohmann::json::parse(slurp(replay_dir / m.filename()));
    original["args"].erase("out_dir");
    replayed["args"].erase("out_dir");
    ++compared;
    if (original != replayed) mismatches.push_back(m.filename().string());
  }
  fs::remove_all(root);
  std::string detail = std::to_string(manifests.size()) + " manifests replayed, " + std::to_string(compared) +
                       " files compared, " + std::to_string(mismatches.size()) + " mismatches";
  for (const auto& f : mismatches) detail += " " + f;
  return {mismatches.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "LMSR exactness", 10, lmsr_exactness},
      {2, "AUC oracle equivalence", 10, auc_equivalence},
      {3, "TLS vs OLS under errors-in-variables", 30, errors_in_variables},
      {4, "detector validity on simulated ground truth", 120, detector_validity},
      {5, "price-impact Delta AUC curve shape", 300, impact_curve_shape},
      {6, "convergence ordering by price-sensitive count", 300, convergence_ordering},
      {7, "truncation determinism", 60, truncation_determinism},
      {8, "manifest replay reproducibility", 60, manifest_replay},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.limit_s;
    failed += pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.2fs, limit %.0fs]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.limit_s);
    std::fflush(stdout);
  }
  return failed;
}
