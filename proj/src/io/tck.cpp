#include "cnatlas/io/tck.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/io/bytes.hpp"

namespace cnatlas::io {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr std::string_view kMagic = "mrtrix tracks";
constexpr std::size_t kMaxHeaderBytes = 1 << 20;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<std::size_t> parse_size(std::string_view s) {
  s = trim(s);
  if (s.empty() || s.size() > 19) return std::nullopt;
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

float read_f32(const char* p) {
  float f;
  std::memcpy(&f, p, sizeof f);
  return f;
}

void append_f32(std::string& out, float f) {
  char b[4];
  std::memcpy(b, &f, 4);
  out.append(b, 4);
}

std::string sanitize(std::string v) {
  for (auto& c : v) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return v;
}

}  // namespace

TckHeader parse_tck_header(std::string_view bytes) {
  TckHeader h;
  std::size_t pos = 0;
  bool first = true;
  bool ended = false;
  while (pos < bytes.size() && pos < kMaxHeaderBytes) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) break;
    const std::string_view line = trim(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    if (first) {
      if (line != kMagic) raise(ErrorCode::FormatError, "missing 'mrtrix tracks' magic line");
      first = false;
      continue;
    }
    if (line == "END") {
      ended = true;
      break;
    }
    if (line.empty()) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      raise(ErrorCode::FormatError, "malformed header line '" + std::string(line.substr(0, 64)) + "'");
    }
    const std::string key(trim(line.substr(0, colon)));
    const std::string value(trim(line.substr(colon + 1)));
    if (key.empty()) raise(ErrorCode::FormatError, "empty header key");
    auto [it, inserted] = h.fields.emplace(key, value);
    if (!inserted) it->second += "\n" + value;
  }
  if (first) raise(ErrorCode::FormatError, "missing 'mrtrix tracks' magic line");
  if (!ended) raise(ErrorCode::TruncatedFile, "header has no END line");
  const std::size_t header_end = pos;

  const auto dt = h.fields.find("datatype");
  if (dt == h.fields.end()) raise(ErrorCode::FormatError, "header lacks datatype");
  h.datatype = dt->second;
  if (h.datatype != "Float32LE") {
    raise(ErrorCode::UnsupportedDatatype, "unsupported TCK datatype '" + h.datatype + "'");
  }
  const auto file = h.fields.find("file");
  if (file == h.fields.end()) raise(ErrorCode::FormatError, "header lacks file entry");
  std::string_view fv = trim(file->second);
  if (fv.empty() || fv.front() != '.') {
    raise(ErrorCode::UnsupportedVariant, "external TCK payload files are not supported");
  }
  fv.remove_prefix(1);
  const auto offset = parse_size(fv);
  if (!offset) raise(ErrorCode::FormatError, "malformed file offset");
  if (*offset < header_end || *offset > bytes.size()) {
    raise(ErrorCode::FormatError, "file offset points outside the payload");
  }
  h.file_offset = *offset;
  if (const auto c = h.fields.find("count"); c != h.fields.end()) {
    h.declared_count = parse_size(c->second);
    if (!h.declared_count) raise(ErrorCode::FormatError, "malformed count");
  }
  return h;
}

Tractogram parse_tck(std::string_view bytes) {
  const TckHeader h = parse_tck_header(bytes);
  Tractogram t;
  if (auto it = h.fields.find("subject_id"); it != h.fields.end()) t.subject_id = it->second;
  if (auto it = h.fields.find("space"); it != h.fields.end()) {
    if (it->second == "atlas") t.space = SpaceTag::atlas;
    else if (it->second == "subject") t.space = SpaceTag::subject;
    else raise(ErrorCode::FormatError, "unknown space tag '" + it->second + "'");
  }

  std::size_t pos = h.file_offset;
  std::int64_t index = 0;
  Streamline current;
  bool terminated = false;
  while (pos + 12 <= bytes.size()) {
    const float x = read_f32(bytes.data() + pos);
    const float y = read_f32(bytes.data() + pos + 4);
    const float z = read_f32(bytes.data() + pos + 8);
    pos += 12;
    if (std::isnan(x) && std::isnan(y) && std::isnan(z)) {
      current.id = index++;
      if (!is_degenerate(current)) t.streamlines.push_back(std::move(current));
      current = Streamline{};
      continue;
    }
    if (std::isinf(x) && std::isinf(y) && std::isinf(z)) {
      terminated = true;
      break;
    }
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      raise(ErrorCode::FormatError, "partially non-finite point in payload");
    }
    current.points.push_back({x, y, z});
  }
  if (!terminated) raise(ErrorCode::TruncatedFile, "TCK payload ends before the Inf terminator");
  // MRtrix may omit the separator before the terminator.
  if (!current.points.empty()) {
    current.id = index++;
    if (!is_degenerate(current)) t.streamlines.push_back(std::move(current));
  }
  return t;
}

Tractogram read_tck(const std::filesystem::path& path) { return parse_tck(read_file(path)); }

std::string encode_tck(const Tractogram& t) {
  for (const auto& s : t.streamlines) {
    for (const auto& p : s.points) {
      if (!p.finite()) {
        raise(ErrorCode::InvalidGeometry,
              "streamline " + std::to_string(s.id) + " contains a non-finite point");
      }
    }
  }
  std::map<std::string, std::string> fields;
  fields["count"] = std::to_string(t.size());
  fields["datatype"] = "Float32LE";
  fields["space"] = t.space == SpaceTag::atlas ? "atlas" : "subject";
  if (!t.subject_id.empty()) fields["subject_id"] = sanitize(t.subject_id);

  auto build = [&](std::size_t offset) {
    fields["file"] = ". " + std::to_string(offset);
    std::string out(kMagic);
    out += '\n';
    for (const auto& [k, v] : fields) out += k + ": " + v + "\n";
    out += "END\n";
    return out;
  };
  std::size_t offset = 0;
  std::string header = build(offset);
  while (header.size() != offset) {
    offset = header.size();
    header = build(offset);
  }

  std::string out = header;
  std::size_t total_points = 0;
  for (const auto& s : t.streamlines) total_points += s.points.size() + 1;
  out.reserve(out.size() + (total_points + 1) * 12);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  for (const auto& s : t.streamlines) {
    for (const auto& p : s.points) {
      append_f32(out, static_cast<float>(p.x));
      append_f32(out, static_cast<float>(p.y));
      append_f32(out, static_cast<float>(p.z));
    }
    append_f32(out, nan);
    append_f32(out, nan);
    append_f32(out, nan);
  }
  append_f32(out, inf);
  append_f32(out, inf);
  append_f32(out, inf);
  return out;
}

void write_tck(const Tractogram& t, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tck(t));
}

}  // namespace cnatlas::io
