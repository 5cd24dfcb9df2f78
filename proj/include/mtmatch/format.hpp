#pragma once

#include <string>

namespace mtmatch {

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

// Fixed-point text with `digits` decimals, for aligned tables.
std::string format_fixed(double v, int digits);

}  // namespace mtmatch
