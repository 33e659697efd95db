#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cnatlas/core/geometry.hpp"

namespace cnatlas::io {

/// Legacy ASCII VTK polydata with POINTS and LINES. Anything after LINES
/// (point/cell data) is ignored. BINARY files and non-polydata datasets throw
/// UnsupportedVariant; bad indices or counts throw FormatError.
Tractogram parse_vtk_polydata(std::string_view text);
Tractogram read_vtk_polydata(const std::filesystem::path& path);

std::string encode_vtk_polydata(const Tractogram& t);
void write_vtk_polydata(const Tractogram& t, const std::filesystem::path& path);

}  // namespace cnatlas::io
