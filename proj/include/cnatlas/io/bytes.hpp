#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cnatlas::io {

/// Whole-file read; throws IoError.
std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling, fsyncs, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
/// Appends and fsyncs.
void append_file_durable(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);

}  // namespace cnatlas::io
