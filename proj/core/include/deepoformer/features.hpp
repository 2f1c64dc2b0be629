#pragma once

#include "deepoformer/dataset.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace deepoformer {

// Logarithm used by the domain features. Base 10 matches the log10(N)
// target; the natural log is kept for sensitivity studies.
enum class LogBase { ten, natural };

// Positive shift in the denominator of every domain feature:
//   sigma_a - fatigue_strength + 100
inline constexpr double kDenominatorShift = 100.0;

// log((uts - sigma_a) / (sigma_a - fs + 100)). Requires uts > sigma_a and a
// positive denominator; throws DomainError naming the failed inequality.
double stussi_feature(double uts, double sigma_a, double fatigue_strength, LogBase base = LogBase::ten);
// log((uts - fs) / (sigma_a - fs + 100)). Requires uts > fs.
double weibull_feature(double uts, double sigma_a, double fatigue_strength, LogBase base = LogBase::ten);
// log(fs / (sigma_a - fs + 100)). Requires fs > 0.
double pm_feature(double sigma_a, double fatigue_strength, LogBase base = LogBase::ten);

// Trunk input y = [sigma_a, sigma_a^3, Stussi, Weibull, PM].
struct TrunkFeatures {
    double sigma_a = 0.0;
    double sigma_a_cubed = 0.0;
    double stussi = 0.0;
    double weibull = 0.0;
    double pm = 0.0;

    std::array<double, 5> values() const { return {sigma_a, sigma_a_cubed, stussi, weibull, pm}; }
    friend bool operator==(const TrunkFeatures&, const TrunkFeatures&) = default;
};

// Branch input u = [UTS, TYS, FatigueStrength, Temper, R].
struct BranchFeatures {
    double uts = 0.0;
    double tys = 0.0;
    double fatigue_strength = 0.0;
    int temper_id = CategoryVocabulary::kUnknownId;
    double stress_ratio_r = 0.0;

    // The continuous part, in the order [UTS, TYS, FatigueStrength, R].
    std::array<double, 4> continuous() const { return {uts, tys, fatigue_strength, stress_ratio_r}; }
    friend bool operator==(const BranchFeatures&, const BranchFeatures&) = default;
};

TrunkFeatures make_trunk_features(const FatigueRecord& record, LogBase base = LogBase::ten);
TrunkFeatures make_trunk_features(double uts, double sigma_a, double fatigue_strength, LogBase base = LogBase::ten);
BranchFeatures make_branch_features(const FatigueRecord& record, const TemperVocabulary& vocab);

// Per-column z-scoring with statistics from the training rows. A column with
// zero spread gets std 1. Uses the population standard deviation.
class Standardizer {
public:
    Standardizer() = default;
    Standardizer(std::vector<double> mean, std::vector<double> stddev);

    // Throws ArgumentError on an empty or ragged set of rows.
    static Standardizer fit(std::span<const std::vector<double>> rows);

    std::size_t width() const noexcept { return mean_.size(); }
    const std::vector<double>& mean() const noexcept { return mean_; }
    const std::vector<double>& stddev() const noexcept { return stddev_; }

    double apply(std::size_t column, double x) const { return (x - mean_.at(column)) / stddev_.at(column); }
    double inverse(std::size_t column, double z) const { return z * stddev_.at(column) + mean_.at(column); }
    void apply_inplace(std::span<double> row) const;
    void inverse_inplace(std::span<double> row) const;

    friend bool operator==(const Standardizer&, const Standardizer&) = default;

private:
    std::vector<double> mean_;
    std::vector<double> stddev_;
};

// Recomputed sigma_a3/Stussi/Weibull/PM for every record, in curve order.
std::vector<StoredFeatures> compute_feature_columns(std::span<const SNCurve> curves, LogBase base = LogBase::ten);

struct FeatureMismatch {
    std::size_t row = 0;
    int curve_id = 0;
    std::string column;
    double stored = 0.0;
    double recomputed = 0.0;
};

// Compares populated feature columns with recomputed values. A value
// mismatches when |stored - recomputed| > tolerance * max(1, |recomputed|).
std::vector<FeatureMismatch> check_stored_features(std::span<const SNCurve> curves, double tolerance = 1e-6,
                                                   LogBase base = LogBase::ten);

}  // namespace deepoformer
