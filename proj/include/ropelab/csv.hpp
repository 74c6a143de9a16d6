#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ropelab {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

std::vector<std::string_view> split(std::string_view text, char separator);
std::string_view trim(std::string_view text);

}  // namespace ropelab
