#include "cnatlas/io/matrix_blob.hpp"

#include <cmath>
#include <cstring>

#include "cnatlas/core/error.hpp"
#include "cnatlas/io/bytes.hpp"

namespace cnatlas::io {
namespace {

constexpr std::string_view kMagic = "NATLMAT1";
constexpr std::size_t kPrefix = 8 + 16;

}  // namespace

std::string encode_matrix(const Eigen::MatrixXd& m) {
  std::string out(kMagic);
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.append(reinterpret_cast<const char*>(&rows), 8);
  out.append(reinterpret_cast<const char*>(&cols), 8);
  out.reserve(kPrefix + static_cast<std::size_t>(rows * cols * 4));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m(r, c));
      if (std::isnan(f)) raise(ErrorCode::InvalidArgument, "matrix contains NaN");
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  return out;
}

Eigen::MatrixXd decode_matrix(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    raise(ErrorCode::FormatError, "bad matrix magic");
  }
  if (bytes.size() < kPrefix) raise(ErrorCode::TruncatedFile, "matrix header truncated");
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::memcpy(&rows, bytes.data() + 8, 8);
  std::memcpy(&cols, bytes.data() + 16, 8);
  const std::uint64_t limit = 1ULL << 40;
  if (rows > limit || cols > limit || (cols != 0 && rows > limit / cols)) {
    raise(ErrorCode::FormatError, "implausible matrix size");
  }
  const std::uint64_t payload = rows * cols * 4;
  if (bytes.size() - kPrefix < payload) raise(ErrorCode::TruncatedFile, "matrix payload truncated");
  if (bytes.size() - kPrefix > payload) raise(ErrorCode::FormatError, "trailing bytes after matrix payload");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const char* p = bytes.data() + kPrefix;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      float f;
      std::memcpy(&f, p, 4);
      p += 4;
      m(r, c) = f;
    }
  }
  return m;
}

void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_matrix(m));
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

}  // namespace cnatlas::io
