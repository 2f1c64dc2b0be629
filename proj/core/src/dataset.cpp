#include "deepoformer/dataset.hpp"

#include "deepoformer/errors.hpp"
#include "json_detail.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace deepoformer {
namespace {

enum Column : std::size_t {
    kCurveId, kUts, kTys, kFatigueStrength, kTemper, kR,
    kSigmaA, kSigmaA3, kStussi, kWeibull, kPm, kLogN, kColumnCount
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string row_prefix(std::size_t row) { return "row " + std::to_string(row) + ": "; }

double parse_number(std::string_view cell, std::size_t row, std::string_view column) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last) {
        throw ParseError(row_prefix(row) + "column " + std::string(column) + ": '" + std::string(cell) +
                         "' is not a number");
    }
    if (!std::isfinite(value)) {
        throw ValidationError(row_prefix(row) + "column " + std::string(column) + " is not finite");
    }
    return value;
}

int parse_int(std::string_view cell, std::size_t row, std::string_view column) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError(row_prefix(row) + "column " + std::string(column) + ": '" + std::string(cell) +
                         "' is not an integer");
    }
    return value;
}

std::optional<double> parse_optional(std::string_view cell, std::size_t row, std::string_view column) {
    if (cell.empty()) return std::nullopt;
    return parse_number(cell, row, column);
}

void validate_record(const FatigueRecord& r, std::size_t row) {
    auto require_positive = [&](double v, const char* name) {
        if (!(v > 0.0)) throw ValidationError(row_prefix(row) + name + " must be > 0, got " + format_double(v));
    };
    require_positive(r.uts, "UTS");
    require_positive(r.tys, "TYS");
    require_positive(r.fatigue_strength, "FatigueStrength");
    require_positive(r.sigma_a, "sigma_a");
    if (!(r.sigma_a < r.uts)) {
        throw ValidationError(row_prefix(row) + "sigma_a (" + format_double(r.sigma_a) + ") must be below UTS (" +
                              format_double(r.uts) + ")");
    }
    if (r.temper.empty()) throw ValidationError(row_prefix(row) + "Temper is empty");
}

bool same_constants(const FatigueRecord& a, const FatigueRecord& b) {
    return a.uts == b.uts && a.tys == b.tys && a.fatigue_strength == b.fatigue_strength && a.temper == b.temper &&
           a.stress_ratio_r == b.stress_ratio_r;
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc()) throw Error("cannot format number");
    return std::string(buf.data(), ptr);
}

void validate_curve(const SNCurve& curve) {
    if (curve.records.empty()) throw ValidationError("curve " + std::to_string(curve.curve_id) + " has no records");
    const FatigueRecord& first = curve.records.front();
    for (const FatigueRecord& r : curve.records) {
        validate_record(r, r.source_row);
        if (r.curve_id != curve.curve_id) {
            throw ValidationError(row_prefix(r.source_row) + "record of curve " + std::to_string(r.curve_id) +
                                  " grouped under curve " + std::to_string(curve.curve_id));
        }
        if (!same_constants(first, r)) {
            throw ValidationError(row_prefix(r.source_row) + "curve " + std::to_string(curve.curve_id) +
                                  " changes UTS/TYS/FatigueStrength/Temper/R between records");
        }
    }
}

DatasetLoadResult read_dataset(std::istream& in) {
    DatasetLoadResult result;
    std::string line;
    std::size_t row = 0;

    std::array<std::size_t, kColumnCount> index{};
    std::size_t header_width = 0;
    bool have_header = false;
    while (!have_header && std::getline(in, line)) {
        ++row;
        std::string_view text = trim(line);
        if (row == 1 && text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
        if (text.empty()) continue;
        const auto cells = split_line(text);
        header_width = cells.size();
        for (std::size_t c = 0; c < kColumnCount; ++c) {
            const auto it = std::find(cells.begin(), cells.end(), kSchemaColumns[c]);
            if (it == cells.end()) {
                throw SchemaError("missing column '" + std::string(kSchemaColumns[c]) + "' in header");
            }
            index[c] = static_cast<std::size_t>(it - cells.begin());
        }
        have_header = true;
    }
    if (!have_header) throw SchemaError("empty dataset: no header row");

    std::map<int, std::size_t> position;  // curve id -> index in result.curves
    while (std::getline(in, line)) {
        ++row;
        const std::string_view text = trim(line);
        if (text.empty()) continue;
        const auto cells = split_line(text);
        if (cells.size() != header_width) {
            throw ParseError(row_prefix(row) + "expected " + std::to_string(header_width) + " cells, found " +
                             std::to_string(cells.size()));
        }
        auto cell = [&](Column c) { return cells[index[c]]; };
        auto name = [](Column c) { return kSchemaColumns[c]; };

        FatigueRecord r;
        r.source_row = row;
        r.curve_id = parse_int(cell(kCurveId), row, name(kCurveId));
        r.uts = parse_number(cell(kUts), row, name(kUts));
        r.tys = parse_number(cell(kTys), row, name(kTys));
        r.fatigue_strength = parse_number(cell(kFatigueStrength), row, name(kFatigueStrength));
        r.temper = std::string(cell(kTemper));
        r.stress_ratio_r = parse_number(cell(kR), row, name(kR));
        r.sigma_a = parse_number(cell(kSigmaA), row, name(kSigmaA));
        r.stored.sigma_a3 = parse_optional(cell(kSigmaA3), row, name(kSigmaA3));
        r.stored.stussi = parse_optional(cell(kStussi), row, name(kStussi));
        r.stored.weibull = parse_optional(cell(kWeibull), row, name(kWeibull));
        r.stored.pm = parse_optional(cell(kPm), row, name(kPm));
        r.log_n = parse_number(cell(kLogN), row, name(kLogN));
        validate_record(r, row);
        if (r.log_n < 4.0 || r.log_n > 10.0) {
            result.warnings.push_back(row_prefix(row) + "logN " + format_double(r.log_n) +
                                      " outside the high-cycle range [4, 10]");
        }

        auto [it, inserted] = position.try_emplace(r.curve_id, result.curves.size());
        if (inserted) result.curves.push_back(SNCurve{r.curve_id, {}});
        SNCurve& curve = result.curves[it->second];
        if (!curve.records.empty() && !same_constants(curve.records.front(), r)) {
            throw ValidationError(row_prefix(row) + "curve " + std::to_string(r.curve_id) +
                                  " changes UTS/TYS/FatigueStrength/Temper/R between records");
        }
        curve.records.push_back(std::move(r));
    }
    return result;
}

DatasetLoadResult read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path.string());
    return read_dataset(in);
}

std::vector<SNCurve> load_dataset(const std::filesystem::path& path) { return read_dataset(path).curves; }

void write_dataset(std::ostream& out, std::span<const SNCurve> curves, std::span<const StoredFeatures> features) {
    if (!features.empty() && features.size() != record_count(curves)) {
        throw ArgumentError("write_dataset: " + std::to_string(features.size()) + " feature rows for " +
                            std::to_string(record_count(curves)) + " records");
    }
    for (std::size_t c = 0; c < kColumnCount; ++c) out << (c ? "," : "") << kSchemaColumns[c];
    out << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::size_t k = 0;
    for (const SNCurve& curve : curves) {
        for (const FatigueRecord& r : curve.records) {
            const StoredFeatures& f = features.empty() ? r.stored : features[k];
            ++k;
            out << r.curve_id << ',' << format_double(r.uts) << ',' << format_double(r.tys) << ','
                << format_double(r.fatigue_strength) << ',' << r.temper << ',' << format_double(r.stress_ratio_r)
                << ',' << format_double(r.sigma_a) << ',' << opt(f.sigma_a3) << ',' << opt(f.stussi) << ','
                << opt(f.weibull) << ',' << opt(f.pm) << ',' << format_double(r.log_n) << '\n';
        }
    }
}

void write_dataset(const std::filesystem::path& path, std::span<const SNCurve> curves,
                   std::span<const StoredFeatures> features) {
    std::ostringstream text;
    write_dataset(text, curves, features);
    detail::write_text_file(path, text.str());
}

std::size_t record_count(std::span<const SNCurve> curves) noexcept {
    std::size_t n = 0;
    for (const auto& c : curves) n += c.records.size();
    return n;
}

CategoryVocabulary::CategoryVocabulary() { tokens_.emplace_back(kUnknownToken); }

int CategoryVocabulary::add(std::string_view token) {
    const std::string key(token);
    if (auto it = ids_.find(key); it != ids_.end()) return it->second;
    const int next = static_cast<int>(tokens_.size());
    tokens_.push_back(key);
    ids_.emplace(key, next);
    return next;
}

int CategoryVocabulary::id(std::string_view token) const noexcept {
    const auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnknownId : it->second;
}

const std::string& CategoryVocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw ArgumentError("vocabulary id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

TemperVocabulary build_temper_vocabulary(std::span<const SNCurve> curves) {
    TemperVocabulary vocab;
    for (const SNCurve& c : curves)
        for (const FatigueRecord& r : c.records) vocab.add(r.temper);
    return vocab;
}

CurveSplit split_curves(std::span<const SNCurve> curves, std::size_t n_test_curves, std::uint64_t seed) {
    if (n_test_curves == 0 || n_test_curves >= curves.size()) {
        throw ArgumentError("n_test_curves must be in [1, " + std::to_string(curves.size()) + "), got " +
                            std::to_string(n_test_curves));
    }
    std::vector<int> ids;
    ids.reserve(curves.size());
    for (const auto& c : curves) ids.push_back(c.curve_id);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first n_test_curves slots end up a uniform sample.
    for (std::size_t i = 0; i < n_test_curves; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    CurveSplit split;
    split.seed = seed;
    split.test_curve_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test_curves));
    split.train_curve_ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(n_test_curves), ids.end());
    return split;
}

CurveSplit split_curves(std::span<const SNCurve> curves, const std::set<int>& test_curve_ids) {
    CurveSplit split;
    std::set<int> known;
    for (const auto& c : curves) known.insert(c.curve_id);
    for (int id : test_curve_ids) {
        if (!known.count(id)) throw ArgumentError("test curve id " + std::to_string(id) + " not in dataset");
    }
    for (int id : known) (test_curve_ids.count(id) ? split.test_curve_ids : split.train_curve_ids).insert(id);
    if (split.test_curve_ids.empty() || split.train_curve_ids.empty()) {
        throw ArgumentError("explicit split must leave at least one train and one test curve");
    }
    return split;
}

std::string split_to_json(const CurveSplit& split) {
    const nlohmann::json doc = {{"seed", split.seed},
                                {"train_curve_ids", split.train_curve_ids},
                                {"test_curve_ids", split.test_curve_ids}};
    return doc.dump(2);
}

CurveSplit split_from_json(std::string_view text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        CurveSplit split;
        split.seed = doc.value("seed", std::uint64_t{0});
        split.train_curve_ids = doc.at("train_curve_ids").get<std::set<int>>();
        split.test_curve_ids = doc.at("test_curve_ids").get<std::set<int>>();
        for (int id : split.test_curve_ids) {
            if (split.train_curve_ids.count(id))
                throw ValidationError("curve " + std::to_string(id) + " is on both sides of the split");
        }
        return split;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed split manifest: ") + e.what());
    }
}

void save_split(const CurveSplit& split, const std::filesystem::path& path) {
    detail::write_text_file(path, split_to_json(split) + "\n");
}

CurveSplit load_split(const std::filesystem::path& path) {
    return split_from_json(detail::read_json_file(path).dump());
}

std::vector<FatigueRecord> train_records(std::span<const SNCurve> curves, const CurveSplit& split) {
    std::vector<FatigueRecord> out;
    for (const auto& c : curves) {
        if (split.train_curve_ids.count(c.curve_id)) out.insert(out.end(), c.records.begin(), c.records.end());
    }
    return out;
}

std::vector<SNCurve> test_curves(std::span<const SNCurve> curves, const CurveSplit& split) {
    std::vector<SNCurve> out;
    for (const auto& c : curves)
        if (split.test_curve_ids.count(c.curve_id)) out.push_back(c);
    return out;
}

std::vector<FatigueRecord> flatten(std::span<const SNCurve> curves) {
    std::vector<FatigueRecord> out;
    for (const auto& c : curves) out.insert(out.end(), c.records.begin(), c.records.end());
    return out;
}

}  // namespace deepoformer
