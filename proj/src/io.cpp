#include "gapccot/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gapccot/errors.hpp"

namespace gapccot {

namespace {

constexpr std::size_t kHeaderSize = 4 + 2 + 3 * 4 + 1;

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return static_cast<U>(v);
}

template <typename Grid>
Grid grid_from_cube(const SpectralCube& cube, const std::filesystem::path& path) {
  if (cube.bands != 1) {
    throw FormatError(path.string() + ": expected a 2-d array (bands = 1), found " +
                      std::to_string(cube.bands) + " bands");
  }
  Grid g(cube.rows, cube.cols);
  g.data = cube.data;
  return g;
}

template <typename Grid>
SpectralCube cube_from_grid(const Grid& g) {
  SpectralCube c(g.rows, g.cols, 1);
  c.data = g.data;
  return c;
}

}  // namespace

std::string encode_cube(const SpectralCube& cube, DType dtype) {
  if (cube.data.size() != cube.rows * cube.cols * cube.bands) {
    throw DimensionError("encode_cube: data length does not match dims");
  }
  std::string out = "HSIC";
  put_le<std::uint16_t>(out, kHsicVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cube.rows));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cube.cols));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cube.bands));
  out.push_back(static_cast<char>(dtype));
  for (double v : cube.data) {
    if (dtype == DType::F32) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

SpectralCube decode_cube(std::string_view bytes) {
  if (bytes.size() < kHeaderSize || bytes.substr(0, 4) != "HSIC") {
    throw FormatError("bad HSIC magic");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kHsicVersion) {
    throw FormatError("unsupported HSIC version " + std::to_string(version));
  }
  const std::size_t rows = get_le<std::uint32_t>(bytes, 6);
  const std::size_t cols = get_le<std::uint32_t>(bytes, 10);
  const std::size_t bands = get_le<std::uint32_t>(bytes, 14);
  const auto tag = static_cast<std::uint8_t>(bytes[18]);
  if (tag != 1 && tag != 2) throw FormatError("unknown HSIC dtype tag " + std::to_string(tag));
  const std::size_t width = tag == 1 ? 4 : 8;
  if (rows == 0 || cols == 0 || bands == 0) throw FormatError("HSIC dims must be >= 1");
  const std::size_t count = rows * cols * bands;
  if (bytes.size() != kHeaderSize + count * width) {
    throw FormatError("HSIC payload length " + std::to_string(bytes.size() - kHeaderSize) +
                      " does not match " + std::to_string(rows) + "x" + std::to_string(cols) +
                      "x" + std::to_string(bands) + " of width " + std::to_string(width));
  }
  SpectralCube cube(rows, cols, bands);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = kHeaderSize + i * width;
    cube.data[i] = tag == 1
                       ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, off)))
                       : std::bit_cast<double>(get_le<std::uint64_t>(bytes, off));
  }
  return cube;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

void write_cube(const std::filesystem::path& path, const SpectralCube& cube, DType dtype) {
  write_file(path, encode_cube(cube, dtype));
}

SpectralCube read_cube(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_cube(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_mask(const std::filesystem::path& path, const Mask& mask, DType dtype) {
  write_cube(path, cube_from_grid(mask), dtype);
}

Mask read_mask(const std::filesystem::path& path) {
  return grid_from_cube<Mask>(read_cube(path), path);
}

void write_measurement(const std::filesystem::path& path, const Measurement& y, DType dtype) {
  write_cube(path, cube_from_grid(y), dtype);
}

Measurement read_measurement(const std::filesystem::path& path) {
  return grid_from_cube<Measurement>(read_cube(path), path);
}

void write_pgm16(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                 std::span<const double> values) {
  if (values.size() != rows * cols) throw DimensionError("write_pgm16: value count mismatch");
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n65535\n";
  for (double v : values) {
    const auto s = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>(s >> 8));
    out.push_back(static_cast<char>(s & 0xff));
  }
  write_file(path, out);
}

std::vector<std::filesystem::path> export_bands_pgm(const std::string& prefix,
                                                    const SpectralCube& cube) {
  std::vector<std::filesystem::path> paths;
  std::vector<double> plane(cube.rows * cube.cols);
  for (std::size_t b = 0; b < cube.bands; ++b) {
    for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = cube.data[p * cube.bands + b];
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_band%02zu.pgm", b);
    paths.emplace_back(prefix + suffix);
    write_pgm16(paths.back(), cube.rows, cube.cols, plane);
  }
  return paths;
}

}  // namespace gapccot
