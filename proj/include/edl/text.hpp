#pragma once

// Small text helpers shared by the file formats.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace edl::text {

// Shortest decimal that parses back to the identical double.
std::string format_double(double v);

// Strict parse of the whole token; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);

// Joins formatted doubles with sep.
std::string join_doubles(const std::vector<double>& values, char sep);

std::string_view trim(std::string_view s);

}  // namespace edl::text
