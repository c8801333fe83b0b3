#pragma once

// Small text helpers shared by the file formats: shortest round-trip number
// formatting, strict number parsing, CSV splitting and atomic file writes.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace phasemap::io {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

// Parses the whole field as a double; throws std::invalid_argument naming
// the context on failure. Accepts "nan"/"inf" spellings so callers can
// report non-finite values with their own diagnostics.
double parse_double(std::string_view field, std::string_view context);
long long parse_int(std::string_view field, std::string_view context);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

// Reads a whole file; throws std::runtime_error with the path on failure.
std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename so readers never observe a
// partially written artifact.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace phasemap::io
