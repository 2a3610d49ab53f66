#include "pricesense/detect.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "pricesense/errors.hpp"
#include "pricesense/random.hpp"

namespace pricesense::detect {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
  double mean_x = 0.0, mean_y = 0.0;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  double max_abs_x = 0.0, sum_y2 = 0.0;
};

Moments moments(std::span<const RegressionPoint> pts) {
  Moments m;
  const double n = static_cast<double>(pts.size());
  for (const auto& p : pts) {
    m.mean_x += p.x;
    m.mean_y += p.y;
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (const auto& p : pts) {
    const double dx = p.x - m.mean_x;
    const double dy = p.y - m.mean_y;
    m.sxx += dx * dx;
    m.sxy += dx * dy;
    m.syy += dy * dy;
    m.max_abs_x = std::max(m.max_abs_x, std::abs(p.x));
    m.sum_y2 += p.y * p.y;
  }
  return m;
}

// Variation of x indistinguishable from rounding of a constant column.
bool x_is_constant(const Moments& m, std::size_t n) {
  const double noise = 4.0 * static_cast<double>(n) * kEps * m.max_abs_x;
  return m.sxx <= static_cast<double>(n) * noise * noise;
}

// Price impact did not vary: zero slope, nothing to test.
bool y_is_constant(const Moments& m, std::size_t n) {
  const double scale = std::sqrt(m.sum_y2 / static_cast<double>(n));
  const double noise = 4.0 * static_cast<double>(n) * kEps * scale;
  return m.syy <= static_cast<double>(n) * noise * noise;
}

SensitivityEstimate flat_fit(const Moments& m, FitMethod method, std::size_t n) {
  SensitivityEstimate est;
  est.status = FitStatus::Degenerate;
  est.method = method;
  est.alpha = m.mean_y;
  est.r_squared = 1.0;
  est.n_points = n;
  return est;
}

bool residual_is_zero(double rss, const Moments& m) {
  constexpr double rel = 64.0 * kEps;
  return rss <= rel * rel * m.sum_y2;
}

double signed_infinity(double beta) { return beta < 0.0 ? -kInf : (beta > 0.0 ? kInf : 0.0); }

double residual_sum_of_squares(std::span<const RegressionPoint> pts, double alpha, double beta) {
  double rss = 0.0;
  for (const auto& p : pts) {
    const double r = p.y - alpha - beta * p.x;
    rss += r * r;
  }
  return rss;
}

double r_squared(double rss, double syy) {
  if (!(syy > 0.0)) return 1.0;
  return std::clamp(1.0 - rss / syy, 0.0, 1.0);
}

// Slope of the orthogonal-regression line for the centered scatter matrix
// [[a, b], [b, c]]. Closed form of the minor eigenvector; nullopt when the
// direction is unidentified or vertical.
std::optional<double> tls_slope_from_scatter(double a, double b, double c) {
  const double d = a - c;
  const double r = std::hypot(d, 2.0 * b);
  if (d >= 0.0) {
    const double denom = d + r;
    if (denom <= 0.0) return std::nullopt;
    return 2.0 * b / denom;
  }
  if (b == 0.0) return std::nullopt;
  return (r - d) / (2.0 * b);
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<RegressionPoint> regression_points(const MarketRecord& market, std::string_view trader_id) {
  const auto series = trader_series(market, trader_id);
  std::vector<RegressionPoint> points;
  if (series.size() < 2) return points;
  points.reserve(series.size() - 1);
  for (std::size_t k = 1; k < series.size(); ++k) {
    points.push_back({series[k].p0 - series[k - 1].pm, series[k].pm - series[k].p0});
  }
  return points;
}

SensitivityEstimate ols_fit(std::span<const RegressionPoint> points) {
  SensitivityEstimate est;
  est.method = FitMethod::Ols;
  est.n_points = points.size();
  if (points.size() < kMinPoints) return est;

  const Moments m = moments(points);
  if (x_is_constant(m, points.size())) return est;
  if (y_is_constant(m, points.size())) return flat_fit(m, FitMethod::Ols, points.size());

  est.beta = m.sxy / m.sxx;
  est.alpha = m.mean_y - est.beta * m.mean_x;
  const double rss = residual_sum_of_squares(points, est.alpha, est.beta);
  est.r_squared = r_squared(rss, m.syy);

  if (residual_is_zero(rss, m)) {
    est.status = FitStatus::Degenerate;
    est.beta_stderr = 0.0;
    est.t_stat = signed_infinity(est.beta);
    est.r_squared = 1.0;
    return est;
  }
  const double dof = static_cast<double>(points.size() - 2);
  est.beta_stderr = std::sqrt(rss / dof / m.sxx);
  est.t_stat = est.beta / est.beta_stderr;
  est.status = FitStatus::Ok;
  return est;
}

SensitivityEstimate tls_fit(std::span<const RegressionPoint> points, const TlsOptions& options) {
  SensitivityEstimate est;
  est.method = FitMethod::Tls;
  est.n_points = points.size();
  const std::size_t n = points.size();
  if (n < kMinPoints) return est;

  const Moments m = moments(points);
  if (!x_is_constant(m, n) && y_is_constant(m, n)) return flat_fit(m, FitMethod::Tls, n);
  Eigen::MatrixX2d centered(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    centered(static_cast<Eigen::Index>(i), 0) = points[i].x - m.mean_x;
    centered(static_cast<Eigen::Index>(i), 1) = points[i].y - m.mean_y;
  }
  const Eigen::JacobiSVD<Eigen::MatrixX2d> svd(centered, Eigen::ComputeThinV);
  const Eigen::Vector2d sv = svd.singularValues();
  if (!(sv(0) > 0.0)) return est;                        // all points coincide
  if (sv(0) - sv(1) <= 1e-12 * sv(0)) return est;        // isotropic cloud, no direction
  const Eigen::Vector2d minor = svd.matrixV().col(1);
  if (std::abs(minor(1)) <= 1e-12 * std::abs(minor(0))) return est;  // vertical line

  // Normal vector rescaled to unit weight on y: y = slope * x + intercept.
  est.beta = -minor(0) / minor(1);
  est.alpha = m.mean_y - est.beta * m.mean_x;
  const double rss = residual_sum_of_squares(points, est.alpha, est.beta);
  est.r_squared = r_squared(rss, m.syy);

  if (sv(1) <= 1e-13 * sv(0)) {
    est.status = FitStatus::Degenerate;
    est.beta_stderr = 0.0;
    est.t_stat = signed_infinity(est.beta);
    est.r_squared = 1.0;
    return est;
  }

  Rng rng = make_rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  double sum = 0.0, sum_sq = 0.0;
  std::size_t valid = 0;
  for (std::size_t r = 0; r < options.n_resamples; ++r) {
    double mx = 0.0, my = 0.0;
    for (auto& i : idx) {
      i = pick(rng);
      mx += points[i].x;
      my += points[i].y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double a = 0.0, b = 0.0, c = 0.0;
    for (auto i : idx) {
      const double dx = points[i].x - mx;
      const double dy = points[i].y - my;
      a += dx * dx;
      b += dx * dy;
      c += dy * dy;
    }
    if (const auto slope = tls_slope_from_scatter(a, b, c)) {
      sum += *slope;
      sum_sq += *slope * *slope;
      ++valid;
    }
  }
  if (valid < 2) return SensitivityEstimate{FitStatus::Undetermined, FitMethod::Tls, 0, 0, 0, 0, 0, n};

  const double mean = sum / static_cast<double>(valid);
  const double var = std::max(0.0, (sum_sq - static_cast<double>(valid) * mean * mean) /
                                       static_cast<double>(valid - 1));
  est.beta_stderr = std::sqrt(var);
  if (est.beta_stderr == 0.0) {
    est.status = FitStatus::Degenerate;
    est.t_stat = signed_infinity(est.beta);
    return est;
  }
  est.t_stat = est.beta / est.beta_stderr;
  est.status = FitStatus::Ok;
  return est;
}

Label classify(const SensitivityEstimate& estimate, double t_threshold) {
  switch (estimate.status) {
    case FitStatus::Undetermined:
      return Label::Undetermined;
    case FitStatus::Degenerate:
      return estimate.beta < 0.0 ? Label::PriceSensitive : Label::NotPriceSensitive;
    case FitStatus::Ok:
      break;
  }
  return estimate.t_stat < t_threshold ? Label::PriceSensitive : Label::NotPriceSensitive;
}

Label ClassificationTable::label(std::string_view trader_id, std::string_view market_id) const {
  for (const auto& e : entries) {
    if (e.trader_id == trader_id && e.market_id == market_id) return e.label;
  }
  return Label::Undetermined;
}

std::map<std::pair<std::string, std::string>, Label> ClassificationTable::label_map() const {
  std::map<std::pair<std::string, std::string>, Label> out;
  for (const auto& e : entries) out[{e.trader_id, e.market_id}] = e.label;
  return out;
}

ClassificationTable classify_dataset(const Dataset& dataset, const DetectOptions& options) {
  ClassificationTable table;
  table.method = options.method;
  table.mode = options.mode;
  for (const auto& market : dataset.markets) {
    for (const auto& trader : traders_of(market)) {
      const auto points = regression_points(market, trader);
      SensitivityEstimate est;
      if (options.method == FitMethod::Ols) {
        est = ols_fit(points);
      } else {
        TlsOptions tls = options.tls;
        tls.seed = derive_seed(options.tls.seed, stable_hash(trader + '\x1f' + market.market_id));
        est = tls_fit(points, tls);
      }
      table.entries.push_back({trader, market.market_id, est, classify(est, options.t_threshold)});
    }
  }
  if (options.mode == LabelMode::Transitive) apply_transitivity(table);
  return table;
}

void apply_transitivity(ClassificationTable& table) {
  std::set<std::string, std::less<>> informed;
  for (const auto& e : table.entries) {
    if (e.label == Label::PriceSensitive) informed.insert(e.trader_id);
  }
  for (auto& e : table.entries) {
    if (informed.contains(e.trader_id)) e.label = Label::PriceSensitive;
  }
  table.mode = LabelMode::Transitive;
}

PsGroup ps_group(std::size_t count) {
  if (count == 0) return PsGroup::Zero;
  if (count == 1) return PsGroup::One;
  if (count <= 3) return PsGroup::TwoToThree;
  return PsGroup::FourPlus;
}

PsCount ps_count(const MarketRecord& market, const ClassificationTable& table) {
  std::set<std::string_view> traders;
  for (const auto& e : table.entries) {
    if (e.market_id == market.market_id && e.label == Label::PriceSensitive) traders.insert(e.trader_id);
  }
  return {traders.size(), ps_group(traders.size())};
}

std::string_view to_string(FitMethod m) { return m == FitMethod::Ols ? "ols" : "tls"; }

std::string_view to_string(LabelMode m) { return m == LabelMode::PerMarket ? "per-market" : "transitive"; }

std::string_view to_string(Label l) {
  switch (l) {
    case Label::PriceSensitive:
      return "PriceSensitive";
    case Label::NotPriceSensitive:
      return "NotPriceSensitive";
    case Label::Undetermined:
      break;
  }
  return "Undetermined";
}

std::string_view to_string(PsGroup g) {
  switch (g) {
    case PsGroup::Zero:
      return "0";
    case PsGroup::One:
      return "1";
    case PsGroup::TwoToThree:
      return "2-3";
    case PsGroup::FourPlus:
      break;
  }
  return "4+";
}

FitMethod parse_fit_method(std::string_view s) {
  if (s == "ols") return FitMethod::Ols;
  if (s == "tls") return FitMethod::Tls;
  throw UsageError("unknown fit method '" + std::string(s) + "' (expected ols or tls)");
}

LabelMode parse_label_mode(std::string_view s) {
  if (s == "per-market") return LabelMode::PerMarket;
  if (s == "transitive") return LabelMode::Transitive;
  throw UsageError("unknown mode '" + std::string(s) + "' (expected per-market or transitive)");
}

Label parse_label(std::string_view s) {
  if (s == "PriceSensitive") return Label::PriceSensitive;
  if (s == "NotPriceSensitive") return Label::NotPriceSensitive;
  if (s == "Undetermined") return Label::Undetermined;
  throw DataError("unknown label '" + std::string(s) + "'");
}

void write_classification_csv(const ClassificationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "trader_id,market_id,method,mode,alpha,beta,t_stat,n_points,r_squared,label\n";
  for (const auto& e : table.entries) {
    const auto& s = e.estimate;
    const bool has = s.determined();
    out << e.trader_id << ',' << e.market_id << ',' << to_string(table.method) << ',' << to_string(table.mode)
        << ',' << format_real(has ? s.alpha : kNaN) << ',' << format_real(has ? s.beta : kNaN) << ','
        << format_real(has ? s.t_stat : kNaN) << ',' << s.n_points << ','
        << format_real(has ? s.r_squared : kNaN) << ',' << to_string(e.label) << '\n';
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

ClassificationTable read_classification_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("trader_id,market_id,method,mode,alpha,beta,t_stat,n_points,r_squared,label", 0) != 0) {
    throw ParseError(file, 1, "missing classification header");
  }
  auto real = [&](std::string_view text, std::size_t ln) {
    if (text == "nan" || text == "-nan") return kNaN;
    double v = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size()) {
      throw ParseError(file, ln, "bad number '" + std::string(text) + "'");
    }
    return v;
  };

  ClassificationTable table;
  std::size_t ln = 1;
  bool first = true;
  while (std::getline(in, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      f.push_back(rest.substr(0, pos));
    }
    f.push_back(rest);
    if (f.size() != 10) throw ParseError(file, ln, "expected 10 fields");
    const FitMethod method = parse_fit_method(f[2]);
    const LabelMode mode = parse_label_mode(f[3]);
    if (first) {
      table.method = method;
      table.mode = mode;
      first = false;
    }
    ClassificationEntry e;
    e.trader_id = std::string(f[0]);
    e.market_id = std::string(f[1]);
    e.label = parse_label(f[9]);
    auto& s = e.estimate;
    s.method = method;
    s.alpha = real(f[4], ln);
    s.beta = real(f[5], ln);
    s.t_stat = real(f[6], ln);
    std::from_chars(f[7].data(), f[7].data() + f[7].size(), s.n_points);
    s.r_squared = real(f[8], ln);
    if (std::isnan(s.beta)) {
      s.status = FitStatus::Undetermined;
    } else if (std::isinf(s.t_stat)) {
      s.status = FitStatus::Degenerate;
    } else {
      s.status = FitStatus::Ok;
      s.beta_stderr = s.t_stat != 0.0 ? std::abs(s.beta / s.t_stat) : 0.0;
    }
    table.entries.push_back(std::move(e));
  }
  return table;
}

}  // namespace pricesense::detect
