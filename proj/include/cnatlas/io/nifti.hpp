#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cnatlas/core/geometry.hpp"

namespace cnatlas::io {

/// Uncompressed NIfTI-1 ("n+1" single file, or "ni1" header with a sibling
/// .img). Datatypes uint8, int16 and float32; nonzero voxels are occupied.
/// The affine comes from the sform when sform_code > 0, otherwise from the
/// qform quaternion; neither set throws MissingAffine.
MaskVolume parse_nifti_mask(std::string_view header_and_data);
MaskVolume read_nifti_mask(const std::filesystem::path& path);

/// Single-file uint8 NIfTI-1 with the affine written as the sform
/// (sform_code = 2, qform_code = 0).
std::string encode_nifti_mask(const MaskVolume& mask);
void write_nifti_mask(const MaskVolume& mask, const std::filesystem::path& path);

/// Affine from NIfTI-1 quaternion parameters (qform method 2).
AffineTransform qform_to_affine(float qb, float qc, float qd, float qx, float qy, float qz,
                                float dx, float dy, float dz, float qfac);

}  // namespace cnatlas::io
