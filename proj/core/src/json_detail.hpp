#pragma once

#include "deepoformer/tape.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace deepoformer::detail {

nlohmann::json parameters_json(const ad::ParameterSet& params);
void assign_parameters(ad::ParameterSet& params, const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace deepoformer::detail
