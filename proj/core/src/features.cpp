#include "deepoformer/features.hpp"

#include "deepoformer/errors.hpp"

#include <cmath>

namespace deepoformer {
namespace {

double take_log(double x, LogBase base) { return base == LogBase::ten ? std::log10(x) : std::log(x); }

double shifted_denominator(const char* feature, double sigma_a, double fatigue_strength) {
    const double d = sigma_a - fatigue_strength + kDenominatorShift;
    if (!(d > 0.0)) {
        throw DomainError(std::string(feature) + ": denominator sigma_a - FatigueStrength + 100 = " +
                          format_double(d) + " must be > 0");
    }
    return d;
}

}  // namespace

double stussi_feature(double uts, double sigma_a, double fatigue_strength, LogBase base) {
    if (!(uts > sigma_a)) {
        throw DomainError("Stussi: UTS (" + format_double(uts) + ") must exceed sigma_a (" + format_double(sigma_a) +
                          ")");
    }
    return take_log((uts - sigma_a) / shifted_denominator("Stussi", sigma_a, fatigue_strength), base);
}

double weibull_feature(double uts, double sigma_a, double fatigue_strength, LogBase base) {
    if (!(uts > fatigue_strength)) {
        throw DomainError("Weibull: UTS (" + format_double(uts) + ") must exceed FatigueStrength (" +
                          format_double(fatigue_strength) + ")");
    }
    return take_log((uts - fatigue_strength) / shifted_denominator("Weibull", sigma_a, fatigue_strength), base);
}

double pm_feature(double sigma_a, double fatigue_strength, LogBase base) {
    if (!(fatigue_strength > 0.0)) {
        throw DomainError("PM: FatigueStrength (" + format_double(fatigue_strength) + ") must be > 0");
    }
    return take_log(fatigue_strength / shifted_denominator("PM", sigma_a, fatigue_strength), base);
}

TrunkFeatures make_trunk_features(double uts, double sigma_a, double fatigue_strength, LogBase base) {
    TrunkFeatures f;
    f.sigma_a = sigma_a;
    f.sigma_a_cubed = sigma_a * sigma_a * sigma_a;
    f.stussi = stussi_feature(uts, sigma_a, fatigue_strength, base);
    f.weibull = weibull_feature(uts, sigma_a, fatigue_strength, base);
    f.pm = pm_feature(sigma_a, fatigue_strength, base);
    return f;
}

TrunkFeatures make_trunk_features(const FatigueRecord& record, LogBase base) {
    return make_trunk_features(record.uts, record.sigma_a, record.fatigue_strength, base);
}

BranchFeatures make_branch_features(const FatigueRecord& record, const TemperVocabulary& vocab) {
    return {record.uts, record.tys, record.fatigue_strength, vocab.id(record.temper), record.stress_ratio_r};
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
    if (mean_.size() != stddev_.size()) throw ArgumentError("standardizer mean/std widths differ");
    for (double s : stddev_)
        if (!(s > 0.0)) throw ArgumentError("standardizer std must be > 0");
}

Standardizer Standardizer::fit(std::span<const std::vector<double>> rows) {
    if (rows.empty()) throw ArgumentError("cannot fit a standardizer on an empty training set");
    const std::size_t width = rows.front().size();
    std::vector<double> mean(width, 0.0), var(width, 0.0);
    for (const auto& row : rows) {
        if (row.size() != width) throw ArgumentError("ragged rows passed to Standardizer::fit");
        for (std::size_t c = 0; c < width; ++c) mean[c] += row[c];
    }
    const double n = static_cast<double>(rows.size());
    for (double& m : mean) m /= n;
    for (const auto& row : rows)
        for (std::size_t c = 0; c < width; ++c) var[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
    std::vector<double> stddev(width);
    for (std::size_t c = 0; c < width; ++c) {
        const double s = std::sqrt(var[c] / n);
        stddev[c] = s > 0.0 ? s : 1.0;
    }
    return Standardizer(std::move(mean), std::move(stddev));
}

void Standardizer::apply_inplace(std::span<double> row) const {
    if (row.size() != width()) throw ArgumentError("standardizer width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean_[c]) / stddev_[c];
}

void Standardizer::inverse_inplace(std::span<double> row) const {
    if (row.size() != width()) throw ArgumentError("standardizer width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * stddev_[c] + mean_[c];
}

std::vector<StoredFeatures> compute_feature_columns(std::span<const SNCurve> curves, LogBase base) {
    std::vector<StoredFeatures> out;
    out.reserve(record_count(curves));
    for (const SNCurve& c : curves) {
        for (const FatigueRecord& r : c.records) {
            TrunkFeatures f;
            try {
                f = make_trunk_features(r, base);
            } catch (const DomainError& e) {
                throw DomainError("row " + std::to_string(r.source_row) + " (curve " + std::to_string(r.curve_id) +
                                  "): " + e.what());
            }
            out.push_back({f.sigma_a_cubed, f.stussi, f.weibull, f.pm});
        }
    }
    return out;
}

std::vector<FeatureMismatch> check_stored_features(std::span<const SNCurve> curves, double tolerance,
                                                   LogBase base) {
    const auto recomputed = compute_feature_columns(curves, base);
    std::vector<FeatureMismatch> mismatches;
    std::size_t k = 0;
    for (const SNCurve& c : curves) {
        for (const FatigueRecord& r : c.records) {
            const StoredFeatures& want = recomputed[k++];
            auto check = [&](const char* column, const std::optional<double>& stored, const std::optional<double>& fresh) {
                if (!stored) return;
                if (std::abs(*stored - *fresh) > tolerance * std::max(1.0, std::abs(*fresh))) {
                    mismatches.push_back({r.source_row, r.curve_id, column, *stored, *fresh});
                }
            };
            check("sigma_a3", r.stored.sigma_a3, want.sigma_a3);
            check("Stussi", r.stored.stussi, want.stussi);
            check("Weibull", r.stored.weibull, want.weibull);
            check("PM", r.stored.pm, want.pm);
        }
    }
    return mismatches;
}

}  // namespace deepoformer
