#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace blt::io {

/// Reads a whole file. Throws blt::Error("io", ...) if unreadable.
std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a half-written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// RFC 4180 CSV: quoted fields may hold commas, doubled quotes and newlines.
/// `on_row` receives the fields and the 1-based line number where the row
/// starts.
void parse_csv(std::string_view text,
               const std::function<void(std::vector<std::string>&, std::size_t)>& on_row);

std::string csv_escape(std::string_view field);

/// Shortest round-trip decimal representation, stable across runs.
std::string format_double(double value);

}  // namespace blt::io
