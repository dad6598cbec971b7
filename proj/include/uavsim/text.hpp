#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace uavsim {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict full-token parses; throw std::invalid_argument on failure.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string_view trim(std::string_view text);
std::vector<std::string_view> split(std::string_view text, char sep);

}  // namespace uavsim
