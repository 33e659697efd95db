#include "cnatlas/io/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "cnatlas/core/error.hpp"
#include "cnatlas/io/bytes.hpp"

namespace cnatlas::io {
namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::int16_t kUint8 = 2;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kFloat32 = 16;

class HeaderView {
 public:
  HeaderView(std::string_view bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof v);
    if (swap_) v = byteswap(v);
    return v;
  }

  template <typename T>
  static T byteswap(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof v);
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof v);
    return v;
  }

 private:
  std::string_view bytes_;
  bool swap_;
};

template <typename T>
void put(std::string& out, std::size_t offset, T v) {
  std::memcpy(out.data() + offset, &v, sizeof v);
}

struct ParsedHeader {
  std::array<int, 3> dims{};
  std::int16_t datatype = 0;
  std::size_t vox_offset = 0;
  AffineTransform affine;
  bool single_file = true;
  bool swap = false;
};

ParsedHeader parse_header(std::string_view bytes) {
  if (bytes.size() < kHeaderSize) raise(ErrorCode::TruncatedFile, "NIfTI header shorter than 348 bytes");
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != 348) {
    if (HeaderView::byteswap(sizeof_hdr) != 348) raise(ErrorCode::FormatError, "sizeof_hdr is not 348");
    swap = true;
  }
  const std::string_view magic = bytes.substr(344, 4);
  ParsedHeader h;
  h.swap = swap;
  if (magic == std::string_view("n+1\0", 4)) {
    h.single_file = true;
  } else if (magic == std::string_view("ni1\0", 4)) {
    h.single_file = false;
  } else {
    raise(ErrorCode::FormatError, "bad NIfTI magic (expected \"n+1\" or \"ni1\")");
  }
  const HeaderView v(bytes, swap);
  const auto ndim = v.get<std::int16_t>(40);
  if (ndim < 1 || ndim > 7) raise(ErrorCode::FormatError, "dim[0] out of range");
  for (int i = 0; i < 3; ++i) {
    const auto d = i < ndim ? v.get<std::int16_t>(42 + 2 * i) : std::int16_t{1};
    if (d < 1) raise(ErrorCode::FormatError, "non-positive dimension");
    h.dims[i] = d;
  }
  for (int i = 3; i < ndim; ++i) {
    if (v.get<std::int16_t>(42 + 2 * i) > 1) {
      raise(ErrorCode::UnsupportedVariant, "mask volumes must be 3D");
    }
  }
  h.datatype = v.get<std::int16_t>(70);
  if (h.datatype != kUint8 && h.datatype != kInt16 && h.datatype != kFloat32) {
    raise(ErrorCode::UnsupportedDatatype, "unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  const float vox_offset = v.get<float>(108);
  if (!std::isfinite(vox_offset) || vox_offset < 0.0f || vox_offset > 1e9f) {
    raise(ErrorCode::FormatError, "invalid vox_offset");
  }
  h.vox_offset = static_cast<std::size_t>(vox_offset);
  if (h.single_file && h.vox_offset < kHeaderSize) raise(ErrorCode::FormatError, "vox_offset inside header");

  const auto qform_code = v.get<std::int16_t>(252);
  const auto sform_code = v.get<std::int16_t>(254);
  if (sform_code > 0) {
    std::array<double, 12> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) m[r * 4 + c] = v.get<float>(280 + 16 * r + 4 * c);
    }
    h.affine = AffineTransform(m);
  } else if (qform_code > 0) {
    h.affine = qform_to_affine(v.get<float>(256), v.get<float>(260), v.get<float>(264),
                               v.get<float>(268), v.get<float>(272), v.get<float>(276),
                               v.get<float>(80), v.get<float>(84), v.get<float>(88),
                               v.get<float>(76));
  } else {
    raise(ErrorCode::MissingAffine, "neither sform nor qform is set");
  }
  for (double x : h.affine.row_major()) {
    if (!std::isfinite(x)) raise(ErrorCode::FormatError, "non-finite affine");
  }
  return h;
}

MaskVolume decode_voxels(const ParsedHeader& h, std::string_view data) {
  const std::size_t count = static_cast<std::size_t>(h.dims[0]) * h.dims[1] * h.dims[2];
  const std::size_t width = h.datatype == kUint8 ? 1 : h.datatype == kInt16 ? 2 : 4;
  if (data.size() < count * width) raise(ErrorCode::TruncatedFile, "NIfTI voxel data truncated");
  std::vector<std::uint8_t> occ(count);
  const HeaderView v(data, h.swap);
  for (std::size_t i = 0; i < count; ++i) {
    switch (h.datatype) {
      case kUint8: occ[i] = static_cast<std::uint8_t>(data[i]) != 0; break;
      case kInt16: occ[i] = v.get<std::int16_t>(2 * i) != 0; break;
      default: {
        const float f = v.get<float>(4 * i);
        occ[i] = f != 0.0f && !std::isnan(f);
      }
    }
  }
  return MaskVolume(h.dims, h.affine, std::move(occ));
}

}  // namespace

AffineTransform qform_to_affine(float qb, float qc, float qd, float qx, float qy, float qz,
                                float dx, float dy, float dz, float qfac) {
  double b = qb, c = qc, d = qd;
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    // Quaternion not normalised: treat as a 180 degree rotation.
    a = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= a;
    c *= a;
    d *= a;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  const double xd = dx > 0 ? dx : 1.0;
  const double yd = dy > 0 ? dy : 1.0;
  double zd = dz > 0 ? dz : 1.0;
  if (qfac < 0.0f) zd = -zd;
  return AffineTransform({(a * a + b * b - c * c - d * d) * xd, 2.0 * (b * c - a * d) * yd,
                          2.0 * (b * d + a * c) * zd, qx,
                          2.0 * (b * c + a * d) * xd, (a * a + c * c - b * b - d * d) * yd,
                          2.0 * (c * d - a * b) * zd, qy,
                          2.0 * (b * d - a * c) * xd, 2.0 * (c * d + a * b) * yd,
                          (a * a + d * d - c * c - b * b) * zd, qz});
}

MaskVolume parse_nifti_mask(std::string_view bytes) {
  const ParsedHeader h = parse_header(bytes);
  if (!h.single_file) raise(ErrorCode::UnsupportedVariant, "\"ni1\" header needs its .img file");
  if (h.vox_offset > bytes.size()) raise(ErrorCode::TruncatedFile, "NIfTI voxel data truncated");
  return decode_voxels(h, bytes.substr(h.vox_offset));
}

MaskVolume read_nifti_mask(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const ParsedHeader h = parse_header(bytes);
  if (h.single_file) {
    if (h.vox_offset > bytes.size()) raise(ErrorCode::TruncatedFile, "NIfTI voxel data truncated");
    return decode_voxels(h, std::string_view(bytes).substr(h.vox_offset));
  }
  auto img = path;
  img.replace_extension(".img");
  const std::string data = read_file(img);
  if (h.vox_offset > data.size()) raise(ErrorCode::TruncatedFile, "NIfTI voxel data truncated");
  return decode_voxels(h, std::string_view(data).substr(h.vox_offset));
}

std::string encode_nifti_mask(const MaskVolume& mask) {
  std::string out(352, '\0');
  put<std::int32_t>(out, 0, 348);
  put<char>(out, 38, 'r');
  put<std::int16_t>(out, 40, 3);
  for (int i = 0; i < 3; ++i) put<std::int16_t>(out, 42 + 2 * i, static_cast<std::int16_t>(mask.dims()[i]));
  for (int i = 4; i < 8; ++i) put<std::int16_t>(out, 40 + 2 * i, 1);
  put<std::int16_t>(out, 70, kUint8);
  put<std::int16_t>(out, 72, 8);
  const auto size = mask.grid().voxel_size();
  put<float>(out, 76, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(out, 80 + 4 * i, static_cast<float>(size[i]));
  put<float>(out, 108, 352.0f);
  put<float>(out, 112, 1.0f);
  put<char>(out, 123, 2);  // mm
  put<std::int16_t>(out, 252, 0);
  put<std::int16_t>(out, 254, 2);
  const auto& a = mask.voxel_to_world();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) put<float>(out, 280 + 16 * r + 4 * c, static_cast<float>(a(r, c)));
  }
  std::memcpy(out.data() + 344, "n+1\0", 4);
  const auto data = mask.data();
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
  return out;
}

void write_nifti_mask(const MaskVolume& mask, const std::filesystem::path& path) {
  write_file_atomic(path, encode_nifti_mask(mask));
}

}  // namespace cnatlas::io
