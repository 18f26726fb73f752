#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ltkd {

/// %.17g rendering: parses back to the identical double.
std::string format_double(double v);
/// Shortest text that parses back to the identical double.
std::string format_shortest(double v);
/// Whole-field parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

}  // namespace ltkd
