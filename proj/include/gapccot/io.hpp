#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapccot/sensing.hpp"

namespace gapccot {

/// HSIC container:
///   "HSIC" | u16 version | u32 rows | u32 cols | u32 bands | u8 dtype | payload
/// All integers little-endian; payload row-major with the band index
/// fastest. dtype 1 = f32, 2 = f64. 2-d arrays are stored with bands = 1.
enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

inline constexpr std::uint16_t kHsicVersion = 1;

std::string encode_cube(const SpectralCube& cube, DType dtype = DType::F64);
SpectralCube decode_cube(std::string_view bytes);

void write_cube(const std::filesystem::path& path, const SpectralCube& cube,
                DType dtype = DType::F64);
SpectralCube read_cube(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const Mask& mask, DType dtype = DType::F64);
Mask read_mask(const std::filesystem::path& path);

void write_measurement(const std::filesystem::path& path, const Measurement& y,
                       DType dtype = DType::F64);
Measurement read_measurement(const std::filesystem::path& path);

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples); values are
/// clamped to [0, 1] before scaling.
void write_pgm16(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                 std::span<const double> values);

/// Writes one PGM per band as <prefix>_band<NN>.pgm and returns the paths.
std::vector<std::filesystem::path> export_bands_pgm(const std::string& prefix,
                                                    const SpectralCube& cube);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gapccot
