#include "deepoformer/evaluation.hpp"

#include "deepoformer/errors.hpp"
#include "json_detail.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace deepoformer {
namespace {

void require_same_length(const char* metric, std::span<const double> a, std::span<const double> b,
                         std::size_t min_size) {
    if (a.size() != b.size()) {
        throw ArgumentError(std::string(metric) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
    }
    if (a.size() < min_size) {
        throw ArgumentError(std::string(metric) + " needs at least " + std::to_string(min_size) + " values");
    }
}

std::string fmt(double v) { return format_double(v); }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
    require_same_length("r_squared", y_true, y_pred, 2);
    double mean = 0.0;
    for (double y : y_true) mean += y;
    mean /= static_cast<double>(y_true.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
        ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
    }
    return 1.0 - ss_res / (ss_tot + kMetricEpsilon);
}

double mae(std::span<const double> y_true, std::span<const double> y_pred) {
    require_same_length("mae", y_true, y_pred, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) total += std::abs(y_true[i] - y_pred[i]);
    return total / static_cast<double>(y_true.size());
}

double mre(std::span<const double> y_true_log, std::span<const double> y_pred_log) {
    require_same_length("mre", y_true_log, y_pred_log, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < y_true_log.size(); ++i) {
        const double n_true = std::pow(10.0, y_true_log[i]);
        const double n_pred = std::pow(10.0, y_pred_log[i]);
        if (!std::isfinite(n_true) || !std::isfinite(n_pred)) {
            throw NumericError("mre: 10^y overflows at index " + std::to_string(i));
        }
        total += std::abs(n_true - n_pred) / (std::abs(n_true) + kMetricEpsilon);
    }
    return total / static_cast<double>(y_true_log.size());
}

MetricSet compute_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
    return {r_squared(y_true, y_pred), mae(y_true, y_pred), mre(y_true, y_pred)};
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw ArgumentError("mean_std of an empty sequence");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / n)};
}

std::vector<GridPoint> curve_grid(const SNCurve& curve, std::size_t dense_points) {
    std::vector<GridPoint> grid;
    if (curve.records.empty()) return grid;
    double lo = curve.records.front().sigma_a, hi = lo;
    for (const FatigueRecord& r : curve.records) {
        grid.push_back({r.sigma_a, r.log_n});
        lo = std::min(lo, r.sigma_a);
        hi = std::max(hi, r.sigma_a);
    }
    if (dense_points == 1) {
        grid.push_back({lo, std::nullopt});
    } else if (dense_points > 1) {
        for (std::size_t i = 0; i < dense_points; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(dense_points - 1);
            grid.push_back({i + 1 == dense_points ? hi : lo + t * (hi - lo), std::nullopt});
        }
    }
    std::stable_sort(grid.begin(), grid.end(), [](const GridPoint& a, const GridPoint& b) {
        if (a.sigma_a != b.sigma_a) return a.sigma_a < b.sigma_a;
        return a.true_log_n.has_value() && !b.true_log_n.has_value();
    });
    return grid;
}

SeedEvaluation evaluate_seed(const DeepOFormerModel& model, const InputEncoder& encoder,
                             std::span<const SNCurve> test, std::span<const std::vector<GridPoint>> grids) {
    if (grids.size() != test.size()) throw ArgumentError("evaluate_seed: one grid per test curve required");
    SeedEvaluation out;
    const std::vector<FatigueRecord> records = flatten(test);
    if (records.empty()) throw ArgumentError("evaluate_seed: no test records");
    out.test_predictions = model.predict(encoder.encode(records));
    std::vector<double> truth;
    truth.reserve(records.size());
    for (const FatigueRecord& r : records) truth.push_back(r.log_n);
    out.metrics = compute_metrics(truth, out.test_predictions);

    for (std::size_t c = 0; c < test.size(); ++c) {
        std::vector<FatigueRecord> at_grid;
        at_grid.reserve(grids[c].size());
        for (const GridPoint& g : grids[c]) {
            FatigueRecord r = test[c].records.front();
            r.sigma_a = g.sigma_a;
            at_grid.push_back(r);
        }
        out.curve_predictions.push_back(model.predict(encoder.encode(at_grid)));
    }
    return out;
}

RunReport aggregate(std::string variant, std::span<const SNCurve> test, std::span<const std::vector<GridPoint>> grids,
                    std::span<const SeedOutcome> outcomes) {
    if (outcomes.empty()) throw ArgumentError("aggregate needs at least one repetition");
    if (grids.size() != test.size()) throw ArgumentError("aggregate: one grid per test curve required");
    RunReport report;
    report.variant = std::move(variant);

    std::vector<const SeedEvaluation*> done;
    std::vector<double> r2, mae_v, mre_v;
    for (const SeedOutcome& o : outcomes) {
        SeedMetrics m{o.index, o.seed, o.evaluation.has_value(), {}, o.error};
        if (o.evaluation) {
            m.metrics = o.evaluation->metrics;
            done.push_back(&*o.evaluation);
            r2.push_back(m.metrics.r2);
            mae_v.push_back(m.metrics.mae);
            mre_v.push_back(m.metrics.mre);
        }
        report.seeds.push_back(std::move(m));
    }
    report.completed = done.size();
    if (done.empty()) return report;
    report.aggregate = MetricSummary{mean_std(r2), mean_std(mae_v), mean_std(mre_v)};

    std::vector<double> column(done.size());
    for (std::size_t c = 0; c < test.size(); ++c) {
        CurveSeries series{test[c].curve_id, {}};
        for (std::size_t g = 0; g < grids[c].size(); ++g) {
            for (std::size_t s = 0; s < done.size(); ++s) column[s] = done[s]->curve_predictions.at(c).at(g);
            const MeanStd ms = mean_std(column);
            series.points.push_back({grids[c][g].sigma_a, grids[c][g].true_log_n, column, ms.mean, ms.stddev});
        }
        report.curves.push_back(std::move(series));
    }

    std::size_t k = 0, inside = 0;
    for (const SNCurve& curve : test) {
        for (const FatigueRecord& r : curve.records) {
            for (std::size_t s = 0; s < done.size(); ++s) column[s] = done[s]->test_predictions.at(k);
            const MeanStd ms = mean_std(column);
            ScatterPoint p{curve.curve_id, r.sigma_a, r.log_n, ms.mean, ms.stddev};
            if (p.lo() <= r.log_n && r.log_n <= p.hi()) ++inside;
            report.scatter.push_back(p);
            ++k;
        }
    }
    report.band_coverage = k == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(k);
    return report;
}

namespace {

nlohmann::json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}}; }
MeanStd mean_std_from_json(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

ReportSummary summarize(const RunReport& report) {
    return {report.variant, report.seeds.size(), report.completed, report.aggregate, report.band_coverage};
}

void export_report(const RunReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    std::ostringstream metrics;
    metrics << "repetition,seed,status,r2,mae,mre\n";
    for (const SeedMetrics& s : report.seeds) {
        metrics << s.index << ',' << s.seed << ',' << (s.completed ? "ok" : "failed");
        if (s.completed) {
            metrics << ',' << fmt(s.metrics.r2) << ',' << fmt(s.metrics.mae) << ',' << fmt(s.metrics.mre) << '\n';
        } else {
            metrics << ",,,\n";
        }
    }
    if (report.aggregate) {
        const MetricSummary& a = *report.aggregate;
        metrics << "mean,," << report.completed << ',' << fmt(a.r2.mean) << ',' << fmt(a.mae.mean) << ','
                << fmt(a.mre.mean) << '\n';
        metrics << "std,," << report.completed << ',' << fmt(a.r2.stddev) << ',' << fmt(a.mae.stddev) << ','
                << fmt(a.mre.stddev) << '\n';
    }
    detail::write_text_file(dir / "metrics.csv", metrics.str());

    for (const CurveSeries& c : report.curves) {
        std::ostringstream out;
        out << "sigma_a,mean_logN,lo,hi,true_logN\n";
        for (const SeriesPoint& p : c.points) {
            out << fmt(p.sigma_a) << ',' << fmt(p.mean) << ',' << fmt(p.lo()) << ',' << fmt(p.hi()) << ','
                << (p.true_log_n ? fmt(*p.true_log_n) : std::string()) << '\n';
        }
        detail::write_text_file(dir / ("curve_" + std::to_string(c.curve_id) + ".csv"), out.str());
    }

    std::ostringstream scatter;
    scatter << "curve_id,sigma_a,true,pred_mean,pred_lo,pred_hi\n";
    for (const ScatterPoint& p : report.scatter) {
        scatter << p.curve_id << ',' << fmt(p.sigma_a) << ',' << fmt(p.true_log_n) << ',' << fmt(p.mean) << ','
                << fmt(p.lo()) << ',' << fmt(p.hi()) << '\n';
    }
    detail::write_text_file(dir / "scatter.csv", scatter.str());

    nlohmann::json summary = {{"format", "deepoformer.summary"},
                              {"variant", report.variant},
                              {"repetitions", report.seeds.size()},
                              {"completed", report.completed},
                              {"band_coverage", report.band_coverage},
                              {"metrics", nullptr}};
    if (report.aggregate) {
        summary["metrics"] = {{"r2", mean_std_json(report.aggregate->r2)},
                              {"mae", mean_std_json(report.aggregate->mae)},
                              {"mre", mean_std_json(report.aggregate->mre)}};
    }
    detail::write_text_file(dir / "summary.json", summary.dump(2) + "\n");
}

ReportSummary load_summary(const std::filesystem::path& summary_json) {
    const nlohmann::json j = detail::read_json_file(summary_json);
    try {
        if (j.at("format").get<std::string>() != "deepoformer.summary") {
            throw ParseError(summary_json.string() + " is not a run summary");
        }
        ReportSummary s;
        s.variant = j.at("variant").get<std::string>();
        s.repetitions = j.at("repetitions").get<std::size_t>();
        s.completed = j.at("completed").get<std::size_t>();
        s.band_coverage = j.at("band_coverage").get<double>();
        const auto& m = j.at("metrics");
        if (!m.is_null()) {
            s.aggregate = MetricSummary{mean_std_from_json(m.at("r2")), mean_std_from_json(m.at("mae")),
                                        mean_std_from_json(m.at("mre"))};
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(summary_json.string() + ": malformed summary: " + e.what());
    }
}

std::string format_report_table(std::span<const ReportSummary> rows) {
    std::size_t name_width = 7;
    for (const ReportSummary& r : rows) name_width = std::max(name_width, r.variant.size());
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    auto cell = [&](const MeanStd& m) { return pad(fixed(m.mean, 4) + " +- " + fixed(m.stddev, 4), 19) + ' '; };

    std::ostringstream out;
    out << pad("variant", name_width) << "  " << pad("R2", 20) << pad("MAE", 20) << pad("MRE", 20) << "runs\n";
    for (const ReportSummary& r : rows) {
        out << pad(r.variant, name_width) << "  ";
        if (r.aggregate) {
            out << cell(r.aggregate->r2) << cell(r.aggregate->mae) << cell(r.aggregate->mre);
        } else {
            out << pad("-", 20) << pad("-", 20) << pad("-", 20);
        }
        out << r.completed << '/' << r.repetitions << '\n';
    }
    return out.str();
}

}  // namespace deepoformer
