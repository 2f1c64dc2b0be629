#pragma once

#include "deepoformer/dataset.hpp"
#include "deepoformer/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace deepoformer {

// Guards the R^2 and MRE denominators.
inline constexpr double kMetricEpsilon = 1e-12;
inline constexpr std::size_t kDenseGridPoints = 50;

// 1 - SS_res / (SS_tot + eps). Throws ArgumentError for n < 2 or unequal lengths.
double r_squared(std::span<const double> y_true, std::span<const double> y_pred);
// Mean |y - y_hat| in log10 cycles.
double mae(std::span<const double> y_true, std::span<const double> y_pred);
// Mean |10^y - 10^y_hat| / (|10^y| + eps), i.e. relative error in cycles.
// Throws NumericError naming the index when 10^y overflows.
double mre(std::span<const double> y_true_log, std::span<const double> y_pred_log);

struct MetricSet {
    double r2 = 0.0;
    double mae = 0.0;
    double mre = 0.0;
};

MetricSet compute_metrics(std::span<const double> y_true, std::span<const double> y_pred);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

// Throws ArgumentError on an empty input.
MeanStd mean_std(std::span<const double> values);

// Stress values at which a test curve is plotted. Observed points carry the
// measured life; dense points do not.
struct GridPoint {
    double sigma_a = 0.0;
    std::optional<double> true_log_n;
};

// Observed sigma_a values (one entry per record) plus `dense_points` evenly
// spaced values over [min, max] of the curve, sorted by stress.
std::vector<GridPoint> curve_grid(const SNCurve& curve, std::size_t dense_points = kDenseGridPoints);

// One trained model's predictions on the test curves.
struct SeedEvaluation {
    MetricSet metrics;
    std::vector<double> test_predictions;               // test records in curve order
    std::vector<std::vector<double>> curve_predictions;  // per test curve, per grid point
};

SeedEvaluation evaluate_seed(const DeepOFormerModel& model, const InputEncoder& encoder,
                             std::span<const SNCurve> test, std::span<const std::vector<GridPoint>> grids);

struct SeedOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::optional<SeedEvaluation> evaluation;  // empty when the repetition failed
    std::string error;
};

struct SeedMetrics {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool completed = false;
    MetricSet metrics;
    std::string error;
};

struct SeriesPoint {
    double sigma_a = 0.0;
    std::optional<double> true_log_n;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;
    double lo() const noexcept { return mean - 2.0 * stddev; }
    double hi() const noexcept { return mean + 2.0 * stddev; }
};

struct CurveSeries {
    int curve_id = 0;
    std::vector<SeriesPoint> points;
};

struct ScatterPoint {
    int curve_id = 0;
    double sigma_a = 0.0;
    double true_log_n = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    double lo() const noexcept { return mean - 2.0 * stddev; }
    double hi() const noexcept { return mean + 2.0 * stddev; }
};

struct MetricSummary {
    MeanStd r2;
    MeanStd mae;
    MeanStd mre;
};

struct RunReport {
    std::string variant;
    std::vector<SeedMetrics> seeds;
    std::size_t completed = 0;
    std::optional<MetricSummary> aggregate;  // empty when no repetition completed
    std::vector<CurveSeries> curves;
    std::vector<ScatterPoint> scatter;
    double band_coverage = 0.0;  // fraction of test points inside mean +- 2 sigma
    std::string config_echo;

    bool all_completed() const noexcept { return completed == seeds.size(); }
};

// Reduces seed outcomes in index order. Series and scatter use completed seeds only.
RunReport aggregate(std::string variant, std::span<const SNCurve> test, std::span<const std::vector<GridPoint>> grids,
                    std::span<const SeedOutcome> outcomes);

// Writes metrics.csv, curve_<id>.csv, scatter.csv and summary.json into
// `dir` (created if missing). Throws IoError when the directory is unwritable.
void export_report(const RunReport& report, const std::filesystem::path& dir);

// Compact per-variant result read back by `report`.
struct ReportSummary {
    std::string variant;
    std::size_t repetitions = 0;
    std::size_t completed = 0;
    std::optional<MetricSummary> aggregate;
    double band_coverage = 0.0;
};

ReportSummary summarize(const RunReport& report);
ReportSummary load_summary(const std::filesystem::path& summary_json);

// Text matrix with one row per variant and mean +- sigma per metric.
std::string format_report_table(std::span<const ReportSummary> rows);

}  // namespace deepoformer
