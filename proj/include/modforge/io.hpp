#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace modforge {

/// Reads a whole file; throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view text);

std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);

}  // namespace modforge
