#include "pricesense/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "pricesense/errors.hpp"
#include "pricesense/random.hpp"
#include "pricesense/sim.hpp"

namespace pricesense::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string abs_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

Dataset load_dir(const fs::path& dir) {
  const fs::path trades = dir / files::kTrades;
  const fs::path markets = dir / files::kMarkets;
  if (!fs::exists(trades)) throw IoError("missing " + trades.string());
  return load_trade_log(trades, fs::exists(markets) ? std::optional<fs::path>(markets) : std::nullopt);
}

json manifest_base(const std::string& command, const json& args, const json& parameters, std::uint64_t seed) {
  json m;
  m["tool"] = "pricesense";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["args"] = args;
  m["parameters"] = parameters;
  m["seed"] = seed;
  m["config_hash"] = hex(stable_hash(parameters.dump()));
  return m;
}

void write_manifest(const fs::path& dir, const json& manifest) {
  const fs::path path = dir / manifest_name(manifest);
  auto out = open_out(path);
  out << manifest.dump(2) << '\n';
  finish(out, path);
}

// Keeps ground-truth rows of surviving markets when the input carries them.
void copy_ground_truth(const fs::path& in_dir, const fs::path& out_dir, const std::set<std::string>& keep) {
  const fs::path src = in_dir / files::kGroundTruth;
  if (!fs::exists(src)) return;
  std::ifstream in(src);
  std::vector<std::string> lines;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      lines.push_back(line);
      header = false;
      continue;
    }
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) continue;
    if (keep.contains(line.substr(a + 1, b - a - 1))) lines.push_back(line);
  }
  const fs::path dst = out_dir / files::kGroundTruth;
  auto out = open_out(dst);
  for (const auto& l : lines) out << l << '\n';
  finish(out, dst);
}

void write_roc(std::ofstream& out, const std::string& prefix, const metrics::RocCurve& c) {
  for (const auto& p : c.points) {
    out << prefix << real(p.threshold) << ',' << real(p.fpr) << ',' << real(p.tpr) << '\n';
  }
}

void report_impact(const ReportArgs& args, const Dataset& ds, const detect::ClassificationTable& table,
                   json& manifest) {
  const auto cutoffs = metrics::kl_percentile_cutoffs(ds, args.percentiles, args.kl_order);
  metrics::ImpactOptions opt;
  opt.kl_order = args.kl_order;
  opt.step = args.step;
  opt.bootstrap = {args.resamples, 0.95, args.seed};
  const auto curve = metrics::impact_curve(ds, table, cutoffs, opt);
  if (!curve.rows.empty() && !curve.rows.front().price_sensitive.delta_auc && !curve.rows.front().other.delta_auc) {
    throw DegenerateStatisticError("all trades come from markets with a single settlement class");
  }

  const fs::path path = args.out_dir / files::kImpactCurve;
  auto out = open_out(path);
  out << "kl_cutoff,group,delta_auc,ci_low,ci_high,n_trades\n";
  auto row = [&](double cutoff, const char* group, const metrics::ImpactPoint& p) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << real(cutoff) << ',' << group << ',' << real(p.delta_auc.value_or(nan)) << ','
        << real(p.ci ? p.ci->low : nan) << ',' << real(p.ci ? p.ci->high : nan) << ',' << p.n_trades << '\n';
  };
  for (const auto& r : curve.rows) {
    row(r.kl_cutoff, "ps", r.price_sensitive);
    row(r.kl_cutoff, "non-ps", r.other);
  }
  finish(out, path);

  // ROC points of the offer and final prices per group and cutoff.
  const auto labels = table.label_map();
  std::vector<std::pair<bool, metrics::ScoredTrade>> trades;
  for (const auto& m : ds.markets) {
    for (const auto& t : m.trades) {
      const auto it = labels.find({t.trader_id, m.market_id});
      trades.emplace_back(it != labels.end() && it->second == detect::Label::PriceSensitive,
                          metrics::ScoredTrade{t.p0, t.pm, m.settlement.value_or(0),
                                               metrics::price_impact_kl(t, args.kl_order)});
    }
  }
  const fs::path roc_path = args.out_dir / files::kImpactRoc;
  auto roc = open_out(roc_path);
  roc << "kl_cutoff,group,price,threshold,fpr,tpr\n";
  for (double cutoff : cutoffs) {
    for (bool ps : {true, false}) {
      std::vector<double> p0, pm;
      std::vector<int> s;
      for (const auto& [sensitive, t] : trades) {
        if (sensitive != ps || t.kl < cutoff) continue;
        p0.push_back(t.p0);
        pm.push_back(t.pm);
        s.push_back(t.settlement);
      }
      try {
        const std::string prefix = real(cutoff) + (ps ? ",ps," : ",non-ps,");
        write_roc(roc, prefix + "p0,", metrics::roc_curve(p0, s, args.step));
        write_roc(roc, prefix + "pm,", metrics::roc_curve(pm, s, args.step));
      } catch (const DegenerateStatisticError&) {
      }
    }
  }
  finish(roc, roc_path);

  json counts = json::array();
  for (const auto& r : curve.rows) {
    counts.push_back({{"kl_cutoff", r.kl_cutoff},
                      {"ps_trades", r.price_sensitive.n_trades},
                      {"non_ps_trades", r.other.n_trades}});
  }
  manifest["counts"] = {{"markets", ds.markets.size()}, {"rows", counts}};
  manifest["outputs"] = {files::kImpactCurve, files::kImpactRoc};
}

void report_convergence(const ReportArgs& args, const Dataset& ds, const detect::ClassificationTable& table,
                        json& manifest) {
  metrics::ConvergenceOptions opt;
  opt.max_days = args.max_days;
  opt.step = args.step;
  opt.bootstrap = {args.resamples, 0.95, args.seed};
  const auto rep = metrics::convergence_analysis(ds, table, opt);
  if (rep.groups.empty()) {
    throw DegenerateStatisticError("no market group has two settlement classes; nothing to analyse");
  }

  const fs::path daily_path = args.out_dir / files::kDailyAuc;
  const fs::path daily_roc_path = args.out_dir / files::kDailyRoc;
  const fs::path avg_path = args.out_dir / files::kAveragedRoc;
  const fs::path summary_path = args.out_dir / files::kGroupSummary;
  const fs::path z_path = args.out_dir / files::kZTests;
  auto daily = open_out(daily_path);
  auto daily_roc = open_out(daily_roc_path);
  auto avg = open_out(avg_path);
  auto summary = open_out(summary_path);
  daily << "group,days_before,auc\n";
  daily_roc << "group,days_before,threshold,fpr,tpr\n";
  avg << "group,threshold,fpr,tpr\n";
  summary << "group,n_markets,averaged_auc,ci_low,ci_high,se\n";
  json groups = json::array();
  for (const auto& g : rep.groups) {
    for (std::size_t d = 0; d < g.daily_auc.size(); ++d) {
      daily << g.group << ',' << d + 1 << ',' << real(g.daily_auc[d]) << '\n';
      write_roc(daily_roc, g.group + ',' + std::to_string(d + 1) + ',', g.daily_roc[d]);
    }
    write_roc(avg, g.group + ',', g.averaged_roc);
    summary << g.group << ',' << g.n_markets << ',' << real(g.averaged_auc.auc) << ','
            << real(g.averaged_auc.ci_low) << ',' << real(g.averaged_auc.ci_high) << ','
            << real(g.averaged_auc_se) << '\n';
    groups.push_back({{"group", g.group}, {"markets", g.n_markets}});
  }
  finish(daily, daily_path);
  finish(daily_roc, daily_roc_path);
  finish(avg, avg_path);
  finish(summary, summary_path);

  auto z = open_out(z_path);
  z << "group_a,group_b,difference,z,p_value\n";
  for (const auto& t : rep.z_tests) {
    z << t.group_a << ',' << t.group_b << ',' << real(t.difference) << ',' << real(t.z) << ',' << real(t.p_value)
      << '\n';
  }
  finish(z, z_path);

  manifest["counts"] = {{"markets", ds.markets.size()}, {"groups", groups}, {"z_tests", rep.z_tests.size()}};
  manifest["warnings"] = rep.warnings;
  manifest["outputs"] = {files::kDailyAuc, files::kDailyRoc, files::kAveragedRoc, files::kGroupSummary,
                         files::kZTests};
}

}  // namespace

std::string manifest_name(const json& manifest) {
  const std::string command = manifest.at("command").get<std::string>();
  if (command == "report") return "report_" + manifest.at("args").at("analysis").get<std::string>() + "_manifest.json";
  return command + "_manifest.json";
}

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnvVar);
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw UsageError(std::string(kSeedEnvVar) + ": expected an unsigned integer");
  return v;
}

std::string_view to_string(Analysis a) { return a == Analysis::ImpactCurve ? "impact-curve" : "convergence"; }

Analysis parse_analysis(std::string_view s) {
  if (s == "impact-curve") return Analysis::ImpactCurve;
  if (s == "convergence") return Analysis::Convergence;
  throw UsageError("unknown analysis '" + std::string(s) + "' (expected impact-curve or convergence)");
}

json cmd_simulate(const SimulateArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw UsageError("config: cannot open " + args.config_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  const auto plan = sim::parse_plan(doc);
  const auto simulated = sim::generate_dataset(plan.cells, plan.seed);

  ensure_dir(args.out_dir);
  save_trade_log(simulated.dataset, args.out_dir / files::kTrades, args.out_dir / files::kMarkets);
  sim::write_ground_truth_csv(simulated, args.out_dir / files::kGroundTruth);

  std::size_t trades = 0;
  for (const auto& m : simulated.dataset.markets) trades += m.trades.size();
  json manifest = manifest_base("simulate",
                                {{"config_path", abs_path(args.config_path)}, {"out_dir", abs_path(args.out_dir)}},
                                sim::plan_to_json(plan), plan.seed);
  manifest["counts"] = {{"markets", simulated.dataset.markets.size()},
                        {"trades", trades},
                        {"short_markets", simulated.short_markets}};
  manifest["outputs"] = {files::kTrades, files::kMarkets, files::kGroundTruth};
  write_manifest(args.out_dir, manifest);
  return manifest;
}

json cmd_truncate(const TruncateArgs& args) {
  if (!(args.params.max_hours_per_trade > 0.0)) throw UsageError("--max-hours-per-trade must be positive");
  const Dataset in = load_dir(args.in_dir);
  Dataset out;
  out.provenance = in.provenance;
  std::set<std::string> keep;

  ensure_dir(args.out_dir);
  const fs::path report_path = args.out_dir / files::kDropReport;
  auto report = open_out(report_path);
  report << "market_id,trades_in,trades_out,status\n";
  std::size_t dropped = 0, truncated = 0;
  for (const auto& m : in.markets) {
    const auto t = truncate_market(m, args.params);
    if (!t) {
      ++dropped;
      report << m.market_id << ',' << m.trades.size() << ",0,dropped\n";
      continue;
    }
    const bool cut = t->trades.size() != m.trades.size();
    truncated += cut ? 1 : 0;
    report << m.market_id << ',' << m.trades.size() << ',' << t->trades.size() << ',' << (cut ? "truncated" : "kept")
           << '\n';
    keep.insert(m.market_id);
    out.markets.push_back(*t);
  }
  finish(report, report_path);
  save_trade_log(out, args.out_dir / files::kTrades, args.out_dir / files::kMarkets);
  copy_ground_truth(args.in_dir, args.out_dir, keep);

  const json params = {{"max_hours_per_trade", args.params.max_hours_per_trade},
                       {"min_trades", args.params.min_trades}};
  json manifest = manifest_base("truncate",
                                {{"in_dir", abs_path(args.in_dir)},
                                 {"out_dir", abs_path(args.out_dir)},
                                 {"max_hours_per_trade", args.params.max_hours_per_trade},
                                 {"min_trades", args.params.min_trades}},
                                params, 0);
  manifest["counts"] = {{"markets_in", in.markets.size()},
                        {"markets_out", out.markets.size()},
                        {"dropped", dropped},
                        {"truncated", truncated},
                        {"chain_warnings", in.chain_warnings}};
  manifest["outputs"] = {files::kTrades, files::kMarkets, files::kDropReport};
  write_manifest(args.out_dir, manifest);
  return manifest;
}

json cmd_detect(const DetectArgs& in_args) {
  DetectArgs args = in_args;
  if (args.out_dir.empty()) args.out_dir = args.in_dir;
  const Dataset ds = load_dir(args.in_dir);
  detect::DetectOptions opt;
  opt.method = args.method;
  opt.mode = args.mode;
  opt.t_threshold = args.t_threshold;
  opt.tls = {args.tls_resamples, args.seed};
  const auto table = detect::classify_dataset(ds, opt);

  ensure_dir(args.out_dir);
  detect::write_classification_csv(table, args.out_dir / files::kClassification);
  const fs::path counts_path = args.out_dir / files::kPsCounts;
  auto counts = open_out(counts_path);
  counts << "market_id,ps_count,group\n";
  for (const auto& m : ds.markets) {
    const auto c = detect::ps_count(m, table);
    counts << m.market_id << ',' << c.count << ',' << detect::to_string(c.group) << '\n';
  }
  finish(counts, counts_path);

  std::size_t ps = 0, not_ps = 0, undetermined = 0;
  for (const auto& e : table.entries) {
    (e.label == detect::Label::PriceSensitive ? ps
     : e.label == detect::Label::NotPriceSensitive ? not_ps
                                                    : undetermined)++;
  }
  const json params = {{"method", detect::to_string(args.method)},
                       {"mode", detect::to_string(args.mode)},
                       {"t_threshold", args.t_threshold},
                       {"tls_resamples", args.tls_resamples},
                       {"min_points", detect::kMinPoints}};
  json manifest = manifest_base("detect",
                                {{"in_dir", abs_path(args.in_dir)},
                                 {"out_dir", abs_path(args.out_dir)},
                                 {"method", detect::to_string(args.method)},
                                 {"mode", detect::to_string(args.mode)},
                                 {"t_threshold", args.t_threshold},
                                 {"seed", args.seed},
                                 {"tls_resamples", args.tls_resamples}},
                                params, args.seed);
  manifest["counts"] = {{"markets", ds.markets.size()},
                        {"pairs", table.entries.size()},
                        {"price_sensitive", ps},
                        {"not_price_sensitive", not_ps},
                        {"undetermined", undetermined}};
  manifest["outputs"] = {files::kClassification, files::kPsCounts};
  write_manifest(args.out_dir, manifest);
  return manifest;
}

json cmd_report(const ReportArgs& in_args) {
  ReportArgs args = in_args;
  if (args.out_dir.empty()) args.out_dir = args.in_dir;
  if (args.resamples == 0) throw UsageError("--resamples must be positive");
  if (args.max_days < 1) throw UsageError("--max-days must be positive");
  if (!std::is_sorted(args.percentiles.begin(), args.percentiles.end()) || args.percentiles.empty() ||
      args.percentiles.front() < 0.0 || args.percentiles.back() > 1.0) {
    throw UsageError("--percentiles must be ascending fractions in [0, 1]");
  }
  const fs::path cls = args.classification.empty() ? args.in_dir / files::kClassification : args.classification;
  const Dataset ds = load_dir(args.in_dir);
  const auto table = detect::read_classification_csv(cls);
  ensure_dir(args.out_dir);

  const json params = {{"analysis", to_string(args.analysis)},
                       {"kl_order", metrics::to_string(args.kl_order)},
                       {"step", args.step},
                       {"n_resamples", args.resamples},
                       {"confidence_level", 0.95},
                       {"percentiles", args.percentiles},
                       {"max_days", args.max_days},
                       {"classification_method", detect::to_string(table.method)},
                       {"classification_mode", detect::to_string(table.mode)}};
  json manifest = manifest_base("report",
                                {{"in_dir", abs_path(args.in_dir)},
                                 {"classification", abs_path(cls)},
                                 {"out_dir", abs_path(args.out_dir)},
                                 {"analysis", to_string(args.analysis)},
                                 {"seed", args.seed},
                                 {"resamples", args.resamples},
                                 {"step", args.step},
                                 {"kl_order", metrics::to_string(args.kl_order)},
                                 {"percentiles", args.percentiles},
                                 {"max_days", args.max_days}},
                                params, args.seed);
  manifest["kl_order"] = metrics::to_string(args.kl_order);
  if (args.analysis == Analysis::ImpactCurve) {
    report_impact(args, ds, table, manifest);
  } else {
    report_convergence(args, ds, table, manifest);
  }
  write_manifest(args.out_dir, manifest);
  return manifest;
}

json replay(const fs::path& manifest_path, const std::optional<fs::path>& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw UsageError("cannot open manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
    const std::string command = m.at("command").get<std::string>();
    const json& a = m.at("args");
    const fs::path out = out_dir ? *out_dir : fs::path(a.at("out_dir").get<std::string>());
    if (command == "simulate") {
      return cmd_simulate({a.at("config_path").get<std::string>(), out});
    }
    if (command == "truncate") {
      return cmd_truncate({a.at("in_dir").get<std::string>(), out,
                           {a.at("max_hours_per_trade").get<double>(), a.at("min_trades").get<std::size_t>()}});
    }
    if (command == "detect") {
      DetectArgs d;
      d.in_dir = a.at("in_dir").get<std::string>();
      d.out_dir = out;
      d.method = detect::parse_fit_method(a.at("method").get<std::string>());
      d.mode = detect::parse_label_mode(a.at("mode").get<std::string>());
      d.t_threshold = a.at("t_threshold").get<double>();
      d.seed = a.at("seed").get<std::uint64_t>();
      d.tls_resamples = a.at("tls_resamples").get<std::size_t>();
      return cmd_detect(d);
    }
    if (command == "report") {
      ReportArgs r;
      r.in_dir = a.at("in_dir").get<std::string>();
      r.classification = a.at("classification").get<std::string>();
      r.out_dir = out;
      r.analysis = parse_analysis(a.at("analysis").get<std::string>());
      r.seed = a.at("seed").get<std::uint64_t>();
      r.resamples = a.at("resamples").get<std::size_t>();
      r.step = a.at("step").get<double>();
      r.kl_order = metrics::parse_kl_order(a.at("kl_order").get<std::string>());
      r.percentiles = a.at("percentiles").get<std::vector<double>>();
      r.max_days = a.at("max_days").get<int>();
      return cmd_report(r);
    }
    throw UsageError("manifest: unknown command '" + command + "'");
  } catch (const json::exception& e) {
    throw UsageError(std::string("manifest: ") + e.what());
  }
}

}  // namespace pricesense::cli
