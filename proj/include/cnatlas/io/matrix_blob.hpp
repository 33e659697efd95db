#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace cnatlas::io {

/// "NATLMAT1", rows and cols as uint64 LE, then row-major float32 LE.
/// NaN entries are rejected with InvalidArgument.
std::string encode_matrix(const Eigen::MatrixXd& m);
/// Throws FormatError (magic/size) or TruncatedFile.
Eigen::MatrixXd decode_matrix(std::string_view bytes);

void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

}  // namespace cnatlas::io
