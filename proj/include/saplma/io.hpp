#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace saplma {

// Whole-file read. Throws Error{io} naming the path.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary then renames over the target, so readers
// never observe a partially written file. Throws Error{io}.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// RFC 4180 comma-separated text: quoted fields, doubled quotes, CRLF or LF
// line ends, optional UTF-8 BOM. Blank lines are skipped.
using CsvRow = std::vector<std::string>;
std::vector<CsvRow> parse_csv(std::string_view text);

// Quote a field if it contains a comma, quote or line break.
std::string csv_escape(std::string_view field);

std::string trim(std::string_view text);

} // namespace saplma
