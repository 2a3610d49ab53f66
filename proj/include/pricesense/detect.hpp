#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pricesense/market_data.hpp"

namespace pricesense::detect {

// One observation of the price-sensitivity regression for a trader:
//   x = p0(t+1) - pm(t)    market offer minus the trader's previous final price
//   y = pm(t+1) - p0(t+1)  price impact of the trader's next trade
struct RegressionPoint {
  double x = 0.0;
  double y = 0.0;
};

enum class FitMethod { Ols, Tls };

enum class FitStatus {
  Ok,
  Degenerate,    // zero residual: perfect fit, t_stat is +/-inf by the sign of beta
  Undetermined,  // too few points or no identification; no estimate
};

struct SensitivityEstimate {
  FitStatus status = FitStatus::Undetermined;
  FitMethod method = FitMethod::Ols;
  double alpha = 0.0;
  double beta = 0.0;
  double beta_stderr = 0.0;
  double t_stat = 0.0;
  double r_squared = 0.0;
  std::size_t n_points = 0;

  bool determined() const { return status != FitStatus::Undetermined; }
};

// Fewer points than this leaves no residual degree of freedom for a
// two-parameter fit.
inline constexpr std::size_t kMinPoints = 3;
inline constexpr double kDefaultTThreshold = -1.65;

std::vector<RegressionPoint> regression_points(const MarketRecord& market, std::string_view trader_id);

SensitivityEstimate ols_fit(std::span<const RegressionPoint> points);

struct TlsOptions {
  std::size_t n_resamples = 2000;
  std::uint64_t seed = 0;
};

// Orthogonal regression through the SVD of the centered [x y] matrix.
// Significance is a bootstrap pseudo-t: slope / stddev of resampled slopes.
SensitivityEstimate tls_fit(std::span<const RegressionPoint> points, const TlsOptions& options = {});

enum class Label { PriceSensitive, NotPriceSensitive, Undetermined };

Label classify(const SensitivityEstimate& estimate, double t_threshold = kDefaultTThreshold);

enum class LabelMode { PerMarket, Transitive };

struct ClassificationEntry {
  std::string trader_id;
  std::string market_id;
  SensitivityEstimate estimate;
  Label label = Label::Undetermined;
};

struct ClassificationTable {
  FitMethod method = FitMethod::Ols;
  LabelMode mode = LabelMode::PerMarket;
  std::vector<ClassificationEntry> entries;  // dataset market order, then first-trade order

  // Undetermined when the pair is absent.
  Label label(std::string_view trader_id, std::string_view market_id) const;
  std::map<std::pair<std::string, std::string>, Label> label_map() const;
};

struct DetectOptions {
  FitMethod method = FitMethod::Ols;
  LabelMode mode = LabelMode::PerMarket;
  double t_threshold = kDefaultTThreshold;
  TlsOptions tls;  // tls.seed is the run seed; each (trader, market) derives its own
};

ClassificationTable classify_dataset(const Dataset& dataset, const DetectOptions& options = {});

// Relabels every market of a trader PriceSensitive if any market is.
void apply_transitivity(ClassificationTable& table);

enum class PsGroup { Zero, One, TwoToThree, FourPlus };

struct PsCount {
  std::size_t count = 0;
  PsGroup group = PsGroup::Zero;
};

PsGroup ps_group(std::size_t count);
PsCount ps_count(const MarketRecord& market, const ClassificationTable& table);

std::string_view to_string(FitMethod m);
std::string_view to_string(LabelMode m);
std::string_view to_string(Label l);
std::string_view to_string(PsGroup g);
FitMethod parse_fit_method(std::string_view s);
LabelMode parse_label_mode(std::string_view s);
Label parse_label(std::string_view s);

// trader_id,market_id,method,mode,alpha,beta,t_stat,n_points,r_squared,label
void write_classification_csv(const ClassificationTable& table, const std::filesystem::path& path);
ClassificationTable read_classification_csv(const std::filesystem::path& path);

}  // namespace pricesense::detect
