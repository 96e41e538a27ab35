#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace uqkit {

// Shortest round-trip decimal form; always '.' as separator regardless of
// the C locale.
std::string format_double(double value);

// Locale-independent full-field parse; nullopt on trailing garbage or empty.
std::optional<double> parse_double(std::string_view text);

}  // namespace uqkit
