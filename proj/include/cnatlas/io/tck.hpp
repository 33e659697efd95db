#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "cnatlas/core/geometry.hpp"

namespace cnatlas::io {

/// Parsed MRtrix track-file header.
struct TckHeader {
  std::map<std::string, std::string> fields;  // repeated keys joined with '\n'
  std::string datatype;
  std::size_t file_offset = 0;
  std::optional<std::size_t> declared_count;
};

/// Throws FormatError, UnsupportedDatatype, UnsupportedVariant or
/// TruncatedFile.
TckHeader parse_tck_header(std::string_view bytes);

/// Streamline ids are the 0-based position in the file. Degenerate
/// streamlines (fewer than 2 points or shorter than 1e-3 mm) are skipped, so
/// ids may have gaps.
Tractogram parse_tck(std::string_view bytes);
Tractogram read_tck(const std::filesystem::path& path);

/// Canonical encoding: sorted header keys, Float32LE payload, NaN separators
/// and an Inf terminator. Throws InvalidGeometry for non-finite points.
std::string encode_tck(const Tractogram& t);
void write_tck(const Tractogram& t, const std::filesystem::path& path);

}  // namespace cnatlas::io
