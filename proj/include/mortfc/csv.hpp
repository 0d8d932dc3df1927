#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mortfc::csv {

/// Shortest decimal representation that parses back to the identical double.
std::string format_double(double value);

/// Strict parse of a full field; throws DataError on trailing garbage.
double parse_double(std::string_view field);
long parse_long(std::string_view field);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Trim ASCII whitespace (including a trailing CR).
std::string_view trim(std::string_view s);

/// Write `contents` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace mortfc::csv
