#include "cnatlas/io/vtk.hpp"

#include <charconv>
#include <cstdio>
#include <vector>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/io/bytes.hpp"

namespace cnatlas::io {
namespace {

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view text) : text_(text) {}

  std::string_view line() {
    if (pos_ >= text_.size()) raise(ErrorCode::FormatError, "unexpected end of VTK file");
    const std::size_t nl = text_.find('\n', pos_);
    const std::size_t end = nl == std::string_view::npos ? text_.size() : nl;
    std::string_view l = text_.substr(pos_, end - pos_);
    pos_ = end == text_.size() ? end : end + 1;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    return l;
  }

  bool next(std::string_view& tok) {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) return false;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    tok = text_.substr(start, pos_ - start);
    return true;
  }

  std::string_view token() {
    std::string_view t;
    if (!next(t)) raise(ErrorCode::FormatError, "unexpected end of VTK file");
    return t;
  }

  template <typename T>
  T number() {
    const auto t = token();
    T v{};
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) {
      raise(ErrorCode::FormatError, "malformed number '" + std::string(t.substr(0, 32)) + "'");
    }
    return v;
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }
  std::string_view text_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kMaxCount = std::size_t{1} << 32;

}  // namespace

Tractogram parse_vtk_polydata(std::string_view text) {
  Tractogram t;
  Tokenizer tok(text);
  const auto magic = tok.line();
  if (magic.rfind("# vtk DataFile", 0) != 0) raise(ErrorCode::FormatError, "missing VTK magic line");
  tok.line();  // title
  const auto encoding = tok.token();
  if (encoding == "BINARY") raise(ErrorCode::UnsupportedVariant, "binary VTK is not supported");
  if (encoding != "ASCII") raise(ErrorCode::FormatError, "unknown VTK encoding");
  if (tok.token() != "DATASET") raise(ErrorCode::FormatError, "missing DATASET");
  if (tok.token() != "POLYDATA") raise(ErrorCode::UnsupportedVariant, "only POLYDATA is supported");

  std::vector<Point3> points;
  bool have_points = false;
  std::string_view word;
  while (tok.next(word)) {
    if (word == "POINTS") {
      const auto n = tok.number<std::size_t>();
      if (n > kMaxCount || n > text.size()) raise(ErrorCode::FormatError, "implausible point count");
      const auto type = tok.token();
      if (type != "float" && type != "double") {
        raise(ErrorCode::UnsupportedVariant, "unsupported point type '" + std::string(type) + "'");
      }
      points.resize(n);
      for (auto& p : points) {
        p.x = tok.number<double>();
        p.y = tok.number<double>();
        p.z = tok.number<double>();
        if (!p.finite()) raise(ErrorCode::FormatError, "non-finite VTK point");
      }
      have_points = true;
    } else if (word == "LINES") {
      if (!have_points) raise(ErrorCode::FormatError, "LINES before POINTS");
      const auto lines = tok.number<std::size_t>();
      const auto size = tok.number<std::size_t>();
      if (lines > size || size > text.size()) raise(ErrorCode::FormatError, "implausible LINES header");
      std::size_t consumed = 0;
      std::int64_t index = 0;
      for (std::size_t l = 0; l < lines; ++l) {
        const auto k = tok.number<std::size_t>();
        consumed += k + 1;
        if (consumed > size) raise(ErrorCode::FormatError, "LINES size mismatch");
        Streamline s;
        s.id = index++;
        s.points.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
          const auto v = tok.number<std::size_t>();
          if (v >= points.size()) raise(ErrorCode::FormatError, "LINES index out of range");
          s.points.push_back(points[v]);
        }
        if (!is_degenerate(s)) t.streamlines.push_back(std::move(s));
      }
      if (consumed != size) raise(ErrorCode::FormatError, "LINES size mismatch");
      break;
    } else if (word == "POINT_DATA" || word == "CELL_DATA") {
      break;
    } else if (word == "VERTICES" || word == "POLYGONS" || word == "TRIANGLE_STRIPS") {
      raise(ErrorCode::UnsupportedVariant, "only POINTS and LINES sections are supported");
    } else {
      raise(ErrorCode::FormatError, "unexpected VTK keyword '" + std::string(word.substr(0, 32)) + "'");
    }
  }
  return t;
}

Tractogram read_vtk_polydata(const std::filesystem::path& path) {
  return parse_vtk_polydata(read_file(path));
}

std::string encode_vtk_polydata(const Tractogram& t) {
  std::size_t total = 0;
  for (const auto& s : t.streamlines) {
    total += s.points.size();
    for (const auto& p : s.points) {
      if (!p.finite()) raise(ErrorCode::InvalidGeometry, "non-finite point");
    }
  }
  std::string out = "# vtk DataFile Version 3.0\n";
  out += "cnatlas tractogram " + (t.subject_id.empty() ? std::string("-") : t.subject_id) + "\n";
  out += "ASCII\nDATASET POLYDATA\n";
  out += "POINTS " + std::to_string(total) + " float\n";
  char buf[96];
  for (const auto& s : t.streamlines) {
    for (const auto& p : s.points) {
      const int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", static_cast<double>(static_cast<float>(p.x)),
                                  static_cast<double>(static_cast<float>(p.y)),
                                  static_cast<double>(static_cast<float>(p.z)));
      out.append(buf, static_cast<std::size_t>(n));
    }
  }
  out += "LINES " + std::to_string(t.size()) + " " + std::to_string(total + t.size()) + "\n";
  std::size_t next = 0;
  for (const auto& s : t.streamlines) {
    out += std::to_string(s.points.size());
    for (std::size_t i = 0; i < s.points.size(); ++i) out += " " + std::to_string(next++);
    out += "\n";
  }
  return out;
}

void write_vtk_polydata(const Tractogram& t, const std::filesystem::path& path) {
  write_file_atomic(path, encode_vtk_polydata(t));
}

}  // namespace cnatlas::io
