#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bgm::text {

bool is_space(char c);
std::string_view trim(std::string_view s);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::size_t word_count(std::string_view s);

// Collapses every whitespace run to one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

// Fixed two-decimal rendering; never prints "-0.00".
std::string format_fixed2(double value);

std::string to_lower_ascii(std::string_view s);

}  // namespace bgm::text
