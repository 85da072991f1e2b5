#pragma once

#include <patchace/tensor.hpp>

#include <cstddef>
#include <filesystem>
#include <vector>

namespace patchace::npy {

/// Serialize to NPY v1.0 bytes (little-endian, C-order, 64-byte aligned
/// header).
std::vector<std::byte> encode(const Tensor& t);

/// Parse NPY v1.0 or v2.0 bytes. Rejects Fortran order, big-endian data and
/// dtypes outside {f32, f64, u8}.
Tensor decode(std::span<const std::byte> bytes);

Tensor read(const std::filesystem::path& path);
void write(const Tensor& t, const std::filesystem::path& path);

} // namespace patchace::npy
