#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pricesense/commands.hpp"
#include "pricesense/errors.hpp"

using namespace pricesense;

namespace {

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = std::min(s.find(',', pos), s.size());
    const std::string item = s.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--percentiles: cannot parse '" + item + "'");
    }
    pos = comma + 1;
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Price-sensitivity analysis of LMSR prediction markets"};
  app.set_version_flag("--version", cli::kToolVersion);
  app.require_subcommand(1);

  cli::SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic trade log from a JSON config");
  simulate->add_option("config", sim.config_path, "JSON experiment config")->required();
  simulate->add_option("out_dir", sim.out_dir, "Output directory")->required();

  cli::TruncateArgs tr;
  auto* truncate = app.add_subcommand("truncate", "Trim sparse trade tails and drop short markets");
  truncate->add_option("in_dir", tr.in_dir, "Directory holding trades.csv and markets.csv")->required();
  truncate->add_option("out_dir", tr.out_dir, "Output directory")->required();
  truncate->add_option("--max-hours-per-trade", tr.params.max_hours_per_trade, "Average trade spacing limit")
      ->capture_default_str();
  truncate->add_option("--min-trades", tr.params.min_trades, "Minimum trades to keep a market")
      ->capture_default_str();

  cli::DetectArgs det;
  std::string method = "ols", mode = "per-market";
  auto* detect = app.add_subcommand("detect", "Classify trader-market pairs as price-sensitive");
  detect->add_option("in_dir", det.in_dir, "Directory holding trades.csv and markets.csv")->required();
  detect->add_option("--out-dir", det.out_dir, "Output directory (default: in_dir)");
  detect->add_option("--method", method, "Regression method")
      ->check(CLI::IsMember({"ols", "tls"}))
      ->capture_default_str();
  detect->add_option("--mode", mode, "Label mode")
      ->check(CLI::IsMember({"per-market", "transitive"}))
      ->capture_default_str();
  detect->add_option("--t-threshold", det.t_threshold, "Slope t-statistic threshold")->capture_default_str();
  auto* det_seed = detect->add_option("--seed", det.seed, "Seed for TLS bootstrap");
  detect->add_option("--tls-resamples", det.tls_resamples, "TLS bootstrap resamples")->capture_default_str();

  cli::ReportArgs rep;
  std::string analysis = "impact-curve", kl_order = "pm||p0", percentiles;
  auto* report = app.add_subcommand("report", "Compute impact-curve or convergence tables");
  report->add_option("in_dir", rep.in_dir, "Directory holding trades.csv and markets.csv")->required();
  report->add_option("classification", rep.classification, "Classification CSV (default: in_dir/classification.csv)");
  report->add_option("--out-dir", rep.out_dir, "Output directory (default: in_dir)");
  report->add_option("--analysis", analysis, "Analysis to run")
      ->check(CLI::IsMember({"impact-curve", "convergence"}))
      ->capture_default_str();
  auto* rep_seed = report->add_option("--seed", rep.seed, "Bootstrap seed");
  report->add_option("--resamples", rep.resamples, "Bootstrap resamples")->capture_default_str();
  report->add_option("--step", rep.step, "ROC threshold step")->capture_default_str();
  report->add_option("--kl-order", kl_order, "KL direction: pm||p0 or p0||pm")->capture_default_str();
  report->add_option("--percentiles", percentiles, "Comma-separated KL cutoff quantiles");
  report->add_option("--max-days", rep.max_days, "Days before EAP for the convergence analysis")
      ->capture_default_str();

  std::string manifest;
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", manifest, "Manifest JSON")->required();
  replay->add_option("--out-dir", replay_out, "Write outputs here instead of the recorded directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  nlohmann::json result;
  if (simulate->parsed()) {
    result = cli::cmd_simulate(sim);
  } else if (truncate->parsed()) {
    result = cli::cmd_truncate(tr);
  } else if (detect->parsed()) {
    det.method = detect::parse_fit_method(method);
    det.mode = detect::parse_label_mode(mode);
    if (det_seed->count() == 0) det.seed = cli::default_seed();
    result = cli::cmd_detect(det);
  } else if (report->parsed()) {
    rep.analysis = cli::parse_analysis(analysis);
    rep.kl_order = metrics::parse_kl_order(kl_order);
    if (!percentiles.empty()) rep.percentiles = parse_fractions(percentiles);
    if (rep_seed->count() == 0) rep.seed = cli::default_seed();
    result = cli::cmd_report(rep);
  } else if (replay->parsed()) {
    result = cli::replay(manifest, replay_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(replay_out));
  }
  std::cout << result.at("command").get<std::string>() << ": wrote " << cli::manifest_name(result) << '\n';
  for (const auto& w : result.value("warnings", nlohmann::json::array())) {
    std::cerr << "warning: " << w.get<std::string>() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const DegenerateStatisticError& e) {
    std::cerr << "degenerate statistic: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
