#include "deepoformer/synthgen.hpp"

#include "deepoformer/errors.hpp"
#include "deepoformer/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace deepoformer {
namespace {

constexpr std::uint64_t kNoiseStream = 0x5851F42D4C957F2DULL;

// Life offset at the knee (log10 cycles) per temper, same order as kFixtureTempers.
constexpr double kTemperOffset[] = {-0.6, 0.0, 0.15, -0.3, 0.4, 0.5, 0.1};

std::string curve_label(int id) { return "curve " + std::to_string(id); }

}  // namespace

void SynthCurveSpec::validate() const {
    const std::string who = curve_label(curve_id);
    if (!(slope > 0.0)) throw ConfigError(who + ": slope b must be > 0");
    if (!(noise_std >= 0.0)) throw ConfigError(who + ": noise_std must be >= 0");
    if (n_points == 0) throw ConfigError(who + ": n_points must be >= 1");
    if (!(tys > 0.0)) throw ConfigError(who + ": TYS must be > 0");
    if (!(fatigue_strength > 0.0)) throw ConfigError(who + ": fatigue strength must be > 0");
    if (!(fatigue_strength < sigma_lo)) throw ConfigError(who + ": sigma range must start above the fatigue strength");
    if (!(sigma_lo <= sigma_hi)) throw ConfigError(who + ": sigma_lo must not exceed sigma_hi");
    if (!(sigma_hi < uts)) throw ConfigError(who + ": sigma_hi must be below UTS");
    if (temper.empty()) throw ConfigError(who + ": temper token must not be empty");
}

double basquin_log_life(double intercept, double slope, double sigma_a) {
    return intercept - slope * std::log10(sigma_a);
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    std::vector<double> out;
    if (n == 0) return out;
    if (n == 1) return {lo};
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0) {
            out.push_back(lo);
        } else if (i + 1 == n) {
            out.push_back(hi);
        } else {
            out.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1)));
        }
    }
    return out;
}

std::vector<SNCurve> generate(std::span<const SynthCurveSpec> specs, std::uint64_t seed) {
    for (const SynthCurveSpec& s : specs) s.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<SNCurve> curves;
    curves.reserve(specs.size());
    for (const SynthCurveSpec& s : specs) {
        SNCurve curve{s.curve_id, {}};
        for (double sigma : log_spaced(s.sigma_lo, s.sigma_hi, s.n_points)) {
            FatigueRecord r;
            r.curve_id = s.curve_id;
            r.uts = s.uts;
            r.tys = s.tys;
            r.fatigue_strength = s.fatigue_strength;
            r.temper = s.temper;
            r.stress_ratio_r = s.stress_ratio_r;
            r.sigma_a = sigma;
            const double noise = s.noise_std > 0.0 ? s.noise_std * gauss(rng) : 0.0;
            r.log_n = basquin_log_life(s.intercept, s.slope, sigma) + noise;
            const TrunkFeatures f = make_trunk_features(r);
            r.stored = {f.sigma_a_cubed, f.stussi, f.weibull, f.pm};
            curve.records.push_back(std::move(r));
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

std::vector<SynthCurveSpec> default_fixture_specs(std::uint64_t seed, const FixtureOptions& options) {
    if (!(options.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    std::vector<SynthCurveSpec> specs;
    specs.reserve(options.n_curves);
    for (std::size_t i = 0; i < options.n_curves; ++i) {
        SynthCurveSpec s;
        s.curve_id = static_cast<int>(i + 1);
        s.uts = uniform(300.0, 600.0);
        const double yield_ratio = uniform(0.6, 0.9);
        s.tys = s.uts * yield_ratio;
        s.fatigue_strength = std::clamp(s.uts * uniform(0.28, 0.4), 80.0, 250.0);
        const std::size_t temper = pick(std::size(kFixtureTempers));
        s.temper = std::string(kFixtureTempers[temper]);
        s.stress_ratio_r = pick(2) == 0 ? -1.0 : 0.1;
        s.n_points = 3 + pick(4);
        s.noise_std = options.noise_std;

        s.slope = std::clamp(2.0 + 3.0 * (s.uts - 300.0) / 300.0 + uniform(-0.1, 0.1), 2.0, 5.0);
        // log10 life where the curve meets the fatigue strength.
        const double knee_life = 6.0 + 4.0 * (yield_ratio - 0.6) / 0.3 + kTemperOffset[temper] +
                                 (s.stress_ratio_r > 0.0 ? -0.2 : 0.0) + uniform(-0.05, 0.05);
        s.intercept = knee_life + s.slope * std::log10(s.fatigue_strength);
        s.sigma_lo = 1.05 * s.fatigue_strength;
        s.sigma_hi = std::min(3.5 * s.fatigue_strength, 0.9 * s.uts);
        specs.push_back(std::move(s));
    }
    return specs;
}

std::vector<SNCurve> default_fixture(std::uint64_t seed, const FixtureOptions& options) {
    const auto specs = default_fixture_specs(seed, options);
    return generate(specs, seed ^ kNoiseStream);
}

}  // namespace deepoformer
