#include "deepoformer/checkpoint.hpp"

#include "deepoformer/errors.hpp"
#include "json_detail.hpp"

#include <fstream>
#include <sstream>

namespace deepoformer {
namespace detail {

nlohmann::json parameters_json(const ad::ParameterSet& params) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& p : params) {
        entries[p->name] = {{"shape", {p->value.rows(), p->value.cols()}}, {"values", p->value.values()}};
    }
    return {{"format", "deepoformer.parameters"}, {"version", ad::kParameterFormatVersion}, {"parameters", entries}};
}

void assign_parameters(ad::ParameterSet& params, const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "deepoformer.parameters")
            throw ParseError("not a deepoformer parameter document");
        const int version = doc.at("version").get<int>();
        if (version != ad::kParameterFormatVersion)
            throw ParseError("unsupported parameter format version " + std::to_string(version));
        const auto& entries = doc.at("parameters");
        if (entries.size() != params.size()) {
            throw ValidationError("parameter file has " + std::to_string(entries.size()) + " entries, model has " +
                                  std::to_string(params.size()));
        }
        for (auto& p : params) {
            if (!entries.contains(p->name)) throw ValidationError("parameter '" + p->name + "' missing from file");
            const auto& e = entries.at(p->name);
            const auto shape = e.at("shape").get<std::vector<std::size_t>>();
            auto values = e.at("values").get<std::vector<double>>();
            if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
                throw ValidationError("parameter '" + p->name + "' has shape mismatch: model " +
                                      p->value.shape_string());
            }
            p->value = ad::Tensor(shape[0], shape[1], std::move(values));
            p->grad = ad::Tensor(shape[0], shape[1]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed parameter document: ") + e.what());
    }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

namespace ad {

std::string parameters_to_json(const ParameterSet& params) { return detail::parameters_json(params).dump(); }

void parameters_from_json(ParameterSet& params, std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed parameter document: ") + e.what());
    }
    detail::assign_parameters(params, doc);
}

void save_parameters(const ParameterSet& params, const std::filesystem::path& path) {
    detail::write_text_file(path, parameters_to_json(params) + "\n");
}

void load_parameters(ParameterSet& params, const std::filesystem::path& path) {
    detail::assign_parameters(params, detail::read_json_file(path));
}

}  // namespace ad
}  // namespace deepoformer
