#pragma once

#include "deepoformer/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace deepoformer {

// One synthetic S-N curve following log10 N = a - b * log10(sigma_a) + noise.
struct SynthCurveSpec {
    int curve_id = 0;
    double intercept = 0.0;  // a: log10 cycles at sigma_a = 1 MPa
    double slope = 0.0;      // b > 0
    double uts = 0.0;
    double tys = 0.0;
    double fatigue_strength = 0.0;
    std::string temper;
    double stress_ratio_r = -1.0;
    std::size_t n_points = 4;
    double sigma_lo = 0.0;  // fatigue_strength < sigma_lo <= sigma_hi < uts
    double sigma_hi = 0.0;
    double noise_std = 0.0;

    // Throws ConfigError naming the curve.
    void validate() const;
};

// Closed-form Basquin life without noise.
double basquin_log_life(double intercept, double slope, double sigma_a);

// Stress levels evenly spaced in log10 over [lo, hi].
std::vector<double> log_spaced(double lo, double hi, std::size_t n);

// Curves in the order of `specs`, with feature columns filled in. Noise is drawn from a
// single generator seeded with `seed`, curve by curve.
std::vector<SNCurve> generate(std::span<const SynthCurveSpec> specs, std::uint64_t seed);

struct FixtureOptions {
    std::size_t n_curves = 54;
    double noise_std = 0.15;
};

inline constexpr std::string_view kFixtureTempers[] = {"O", "T3", "T351", "T4", "T6", "T651", "T73"};

// Material constants drawn in plausible aluminium ranges (UTS 300-600 MPa,
// fatigue strength 80-250 MPa, slope 2-5, 3-6 points per curve). Slope and
// life level vary smoothly with the material constants and temper so that
// curves held out of training remain predictable.
std::vector<SynthCurveSpec> default_fixture_specs(std::uint64_t seed, const FixtureOptions& options = {});
std::vector<SNCurve> default_fixture(std::uint64_t seed, const FixtureOptions& options = {});

}  // namespace deepoformer
