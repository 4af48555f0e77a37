#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace egmsynth {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);

std::vector<std::string> split_fields(std::string_view line, char delimiter);

}  // namespace egmsynth
