#ifndef STMAUDIT_IO_UTIL_HPP_
#define STMAUDIT_IO_UTIL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stmaudit {

/// Shortest-round-trip decimal rendering ("%.17g"), used for every numeric
/// file output so artifacts are byte-stable across runs.
std::string format_double(double value);

/// Fixed two-decimal rendering for grid coordinates.
std::string format_fixed2(double value);

/// RFC 4180 CSV: quoted fields, doubled quotes, newlines inside quotes.
/// Returns one vector of fields per record. CRLF and LF both accepted.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

/// Quotes a field if it contains a comma, quote, or newline.
std::string csv_escape(std::string_view field);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Splits on '\n', dropping a trailing '\r' per line; a trailing final
/// newline does not produce an empty last line.
std::vector<std::string> split_lines(std::string_view content);

std::uint64_t fnv1a64_hash(std::string_view data);

}  // namespace stmaudit

#endif  // STMAUDIT_IO_UTIL_HPP_
