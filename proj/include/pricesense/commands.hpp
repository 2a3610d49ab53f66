#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pricesense/detect.hpp"
#include "pricesense/market_data.hpp"
#include "pricesense/metrics.hpp"

// Batch pipeline: simulate -> truncate -> detect -> report. Each command reads
// and writes plain CSV files in a directory and leaves a JSON manifest that
// `replay` can re-execute.
namespace pricesense::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSeedEnvVar = "PRICESENSE_SEED";

namespace files {
inline constexpr const char* kTrades = "trades.csv";
inline constexpr const char* kMarkets = "markets.csv";
inline constexpr const char* kGroundTruth = "ground_truth.csv";
inline constexpr const char* kDropReport = "drop_report.csv";
inline constexpr const char* kClassification = "classification.csv";
inline constexpr const char* kPsCounts = "ps_counts.csv";
inline constexpr const char* kImpactCurve = "impact_curve.csv";
inline constexpr const char* kImpactRoc = "impact_roc_points.csv";
inline constexpr const char* kDailyAuc = "daily_auc.csv";
inline constexpr const char* kDailyRoc = "daily_roc_points.csv";
inline constexpr const char* kAveragedRoc = "averaged_roc_points.csv";
inline constexpr const char* kGroupSummary = "group_summary.csv";
inline constexpr const char* kZTests = "z_tests.csv";
}  // namespace files

struct SimulateArgs {
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
};

struct TruncateArgs {
  std::filesystem::path in_dir;
  std::filesystem::path out_dir;
  TruncationParams params;
};

struct DetectArgs {
  std::filesystem::path in_dir;
  std::filesystem::path out_dir;
  detect::FitMethod method = detect::FitMethod::Ols;
  detect::LabelMode mode = detect::LabelMode::PerMarket;
  double t_threshold = detect::kDefaultTThreshold;
  std::uint64_t seed = 0;
  std::size_t tls_resamples = 2000;
};

enum class Analysis { ImpactCurve, Convergence };

struct ReportArgs {
  std::filesystem::path in_dir;
  std::filesystem::path classification;  // defaults to in_dir/classification.csv
  std::filesystem::path out_dir;
  Analysis analysis = Analysis::ImpactCurve;
  std::uint64_t seed = 0;
  std::size_t resamples = 10000;
  double step = 0.05;
  metrics::KlOrder kl_order = metrics::KlOrder::PostVsPre;
  std::vector<double> percentiles{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int max_days = 14;
};

// Each returns the manifest it wrote.
nlohmann::json cmd_simulate(const SimulateArgs& args);
nlohmann::json cmd_truncate(const TruncateArgs& args);
nlohmann::json cmd_detect(const DetectArgs& args);
nlohmann::json cmd_report(const ReportArgs& args);

// Re-runs the command recorded in a manifest, optionally into another directory.
nlohmann::json replay(const std::filesystem::path& manifest_path,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string manifest_name(const nlohmann::json& manifest);

// Default seed from PRICESENSE_SEED, else 0. Throws UsageError if malformed.
std::uint64_t default_seed();

std::string_view to_string(Analysis a);
Analysis parse_analysis(std::string_view s);

}  // namespace pricesense::cli
