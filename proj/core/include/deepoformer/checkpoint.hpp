#pragma once

#include "deepoformer/tape.hpp"

#include <filesystem>
#include <string>
#include <string_view>

// Parameter files are JSON:
//   {"format": "deepoformer.parameters", "version": 1,
//    "parameters": {"<name>": {"shape": [rows, cols], "values": [row-major...]}}}
// Values are written with round-trip precision, so save/load is bit exact.
namespace deepoformer::ad {

inline constexpr int kParameterFormatVersion = 1;

std::string parameters_to_json(const ParameterSet& params);
// Overwrites values in `params`. Every parameter must be present with a
// matching shape; extra entries are an error too.
void parameters_from_json(ParameterSet& params, std::string_view text);

void save_parameters(const ParameterSet& params, const std::filesystem::path& path);
void load_parameters(ParameterSet& params, const std::filesystem::path& path);

}  // namespace deepoformer::ad
