#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sealstamp {

/// "YYYY-MM-DDTHH:MM:SS.ffffffZ"
std::string format_utc(std::chrono::system_clock::time_point tp);
std::string utc_now();

/// Appends `data` and fsyncs before returning.
void append_durable(const std::filesystem::path& path, std::string_view data);

/// Write to a sibling temp file, fsync, rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::string read_file(const std::filesystem::path& path);

void fsync_path(const std::filesystem::path& path);

/// Splits on '\t' keeping empty fields.
std::vector<std::string> split_tabs(std::string_view line);

/// Escapes '\\', '\t', '\n', '\r' so a value fits in one TSV field.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view escaped);

std::string random_hex_id(std::size_t bytes);

}  // namespace sealstamp
