#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

namespace fvx::toml {

/// Parses the TOML subset used by pipeline configs into a JSON object:
/// tables and dotted keys, basic and literal strings, integers, floats,
/// booleans, arrays and inline tables. Dates and multi-line strings are
/// rejected. Errors are ValidationErrors carrying "origin:line".
nlohmann::json parse(std::string_view text, const std::string& origin = "<config>");

}  // namespace fvx::toml
