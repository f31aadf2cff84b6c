#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace owdmon {

// Fixed-point decimal formatting, locale independent.
std::string format_fixed(double v, int precision);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int64(std::string_view s);

// Splits on a single-character delimiter; no quoting (fields never contain it).
std::vector<std::string_view> split_fields(std::string_view line, char delim = ',');

// Lower median: for even n returns element (n-1)/2 of the sorted sequence.
double lower_median(std::vector<double> values);
// Standard median (midpoint of the two central elements for even n).
double median(std::vector<double> values);
// Median absolute deviation about the median, unscaled.
double mad(const std::vector<double>& values);

// FNV-1a over arbitrary bytes; stable across runs and platforms.
std::uint64_t fnv1a_bytes(const void* data, std::size_t len,
                          std::uint64_t seed = 14695981039346656037ULL);
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 14695981039346656037ULL) {
    return fnv1a_bytes(s.data(), s.size(), seed);
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// UTC date "YYYY-MM-DD" for an epoch second.
std::string utc_date(std::int64_t epoch);
// UTC month "YYYY-MM" for an epoch second.
std::string utc_month(std::int64_t epoch);

}  // namespace owdmon
