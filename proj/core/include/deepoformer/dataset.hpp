#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepoformer {

// Exact header names of the dataset CSV, in canonical order.
inline constexpr std::string_view kSchemaColumns[] = {
    "curve_id", "UTS", "TYS", "FatigueStrength", "Temper", "R",
    "sigma_a",  "sigma_a3", "Stussi", "Weibull", "PM", "logN"};

// Feature columns as found in a file. Never used as model input; kept so the
// file can be checked against recomputed values and written back unchanged.
struct StoredFeatures {
    std::optional<double> sigma_a3;
    std::optional<double> stussi;
    std::optional<double> weibull;
    std::optional<double> pm;
};

// One fatigue test: material constants, loading and the log10 life.
struct FatigueRecord {
    int curve_id = 0;
    double uts = 0.0;               // MPa
    double tys = 0.0;               // MPa
    double fatigue_strength = 0.0;  // MPa
    std::string temper;
    double stress_ratio_r = 0.0;  // stored as given, never reinterpreted
    double sigma_a = 0.0;         // MPa
    double log_n = 0.0;           // log10(cycles)

    StoredFeatures stored;
    std::size_t source_row = 0;  // 1-based line in the source file, 0 if synthetic
};

// Records sharing one material/test setup.
struct SNCurve {
    int curve_id = 0;
    std::vector<FatigueRecord> records;
};

struct DatasetLoadResult {
    std::vector<SNCurve> curves;
    std::vector<std::string> warnings;
};

// Parses the CSV schema. Curves appear in order of first appearance and keep
// file order internally. Throws SchemaError (missing column), ParseError
// (non-numeric cell, with row) or ValidationError (invariant broken, with row).
DatasetLoadResult read_dataset(std::istream& in);
DatasetLoadResult read_dataset(const std::filesystem::path& path);
std::vector<SNCurve> load_dataset(const std::filesystem::path& path);

// Writes the schema CSV. Feature columns come from `features` when given
// (one entry per record in curve order), otherwise from each record's
// stored values. Numbers use shortest round-trip formatting.
void write_dataset(std::ostream& out, std::span<const SNCurve> curves,
                   std::span<const StoredFeatures> features = {});
void write_dataset(const std::filesystem::path& path, std::span<const SNCurve> curves,
                   std::span<const StoredFeatures> features = {});

// Checks the per-curve invariants (shared constants, sigma_a < uts, ...).
void validate_curve(const SNCurve& curve);

std::size_t record_count(std::span<const SNCurve> curves) noexcept;

// Token -> dense id map for one categorical column. Id 0 is reserved for
// tokens never seen while building.
class CategoryVocabulary {
public:
    static constexpr int kUnknownId = 0;
    static constexpr std::string_view kUnknownToken = "<unknown>";

    CategoryVocabulary();

    // Returns the existing id or assigns the next one.
    int add(std::string_view token);
    int id(std::string_view token) const noexcept;
    const std::string& token(int id) const;
    // Number of ids including the unknown slot.
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    friend bool operator==(const CategoryVocabulary& a, const CategoryVocabulary& b) {
        return a.tokens_ == b.tokens_;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

using TemperVocabulary = CategoryVocabulary;

// Ids in first-appearance order starting at 1.
TemperVocabulary build_temper_vocabulary(std::span<const SNCurve> curves);

struct CurveSplit {
    std::set<int> train_curve_ids;
    std::set<int> test_curve_ids;
    std::uint64_t seed = 0;

    bool is_test(int curve_id) const { return test_curve_ids.count(curve_id) != 0; }
};

// Seeded uniform choice of `n_test_curves` test curves. Requires
// 0 < n_test_curves < curves.size(); throws ArgumentError otherwise.
CurveSplit split_curves(std::span<const SNCurve> curves, std::size_t n_test_curves, std::uint64_t seed);
// Explicit test ids; every id must exist and at least one curve must remain for training.
CurveSplit split_curves(std::span<const SNCurve> curves, const std::set<int>& test_curve_ids);

// Split manifest: {"seed": s, "train_curve_ids": [...], "test_curve_ids": [...]}
std::string split_to_json(const CurveSplit& split);
CurveSplit split_from_json(std::string_view text);
void save_split(const CurveSplit& split, const std::filesystem::path& path);
CurveSplit load_split(const std::filesystem::path& path);

// Records of the curves on one side of the split, in curve order.
std::vector<FatigueRecord> train_records(std::span<const SNCurve> curves, const CurveSplit& split);
std::vector<SNCurve> test_curves(std::span<const SNCurve> curves, const CurveSplit& split);
std::vector<FatigueRecord> flatten(std::span<const SNCurve> curves);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace deepoformer
