#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "gapccot/random.hpp"

namespace gapccot {

/// Hyperspectral data-cube, row-major with the band index fastest.
struct SpectralCube {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bands = 0;
  std::vector<double> data;
  std::vector<double> wavelengths;  // optional, nm; empty or one per band

  SpectralCube() = default;
  SpectralCube(std::size_t rows, std::size_t cols, std::size_t bands, double fill = 0.0)
      : rows(rows), cols(cols), bands(bands), data(rows * cols * bands, fill) {}

  std::size_t index(std::size_t r, std::size_t c, std::size_t b) const {
    return (r * cols + c) * bands + b;
  }
  double& at(std::size_t r, std::size_t c, std::size_t b) { return data[index(r, c, b)]; }
  double at(std::size_t r, std::size_t c, std::size_t b) const { return data[index(r, c, b)]; }
  bool same_dims(const SpectralCube& o) const {
    return rows == o.rows && cols == o.cols && bands == o.bands;
  }
};

/// Dense 2-d array. The tag keeps masks, measurements and psi maps apart.
template <class Tag>
struct Grid2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Grid2D() = default;
  Grid2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows(rows), cols(cols), data(rows * cols, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

using Mask = Grid2D<struct MaskTag>;
using Measurement = Grid2D<struct MeasurementTag>;
using PsiMap = Grid2D<struct PsiTag>;

struct NoiseSpec {
  enum class Kind { None, Gaussian, Shot };
  Kind kind = Kind::None;
  double sigma = 0.0;  // Gaussian standard deviation
  double peak = 0.0;   // shot noise photon scale

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(double sigma) { return {Kind::Gaussian, sigma, 0.0}; }
  static NoiseSpec shot(double peak) { return {Kind::Shot, 0.0, peak}; }
};

/// Band m of the output is band m of the cube times the mask.
SpectralCube modulate(const SpectralCube& cube, const Mask& mask);

/// Translates band m right by dispersion*m columns into a widened cube.
SpectralCube shift(const SpectralCube& cube, std::size_t dispersion);

/// Inverse of shift: crops each band back to `cols` columns.
SpectralCube unshift(const SpectralCube& shifted, std::size_t dispersion, std::size_t cols);

std::size_t measurement_cols(std::size_t cols, std::size_t bands, std::size_t dispersion);

/// Adds noise in place. Shot noise is Poisson(y*peak)/peak; negative inputs count as zero.
void add_noise(Measurement& y, const NoiseSpec& noise, Rng& rng);

/// Matrix-free sensing matrix H for CASSI or video snapshot compressive imaging.
///
/// CASSI: y(u, v) = sum_m mask(u, v - d*m) * x(u, v - d*m, m).
/// Video: y(u, v) = sum_t mask_t(u, v) * x(u, v, t), frames stored as bands.
/// The rows of H have disjoint support per measurement pixel, so H H^T is
/// diagonal; psi() holds that diagonal.
class SensingOperator {
 public:
  struct Cassi {
    Mask mask;
    std::size_t dispersion;
  };
  struct Video {
    std::vector<Mask> frames;
  };

  static SensingOperator cassi(Mask mask, std::size_t bands, std::size_t dispersion = 2);
  static SensingOperator video(std::vector<Mask> frames);

  bool is_cassi() const { return std::holds_alternative<Cassi>(kind_); }
  const std::variant<Cassi, Video>& kind() const { return kind_; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t bands() const { return bands_; }
  std::size_t measurement_cols() const { return psi_.cols; }

  Measurement forward(const SpectralCube& cube) const;
  Measurement forward(const SpectralCube& cube, const NoiseSpec& noise, Rng& rng) const;
  SpectralCube adjoint(const Measurement& y) const;
  const PsiMap& psi() const { return psi_; }

  /// Throws DimensionError unless the cube matches this operator.
  void check_cube(const SpectralCube& cube) const;
  void check_measurement(const Measurement& y) const;

 private:
  SensingOperator(std::variant<Cassi, Video> kind, std::size_t rows, std::size_t cols,
                  std::size_t bands);
  // Mask value that multiplies band b at scene pixel (r, c).
  double weight(std::size_t r, std::size_t c, std::size_t b) const;
  // Measurement column receiving band b from scene column c.
  std::size_t target_col(std::size_t c, std::size_t b) const;

  std::variant<Cassi, Video> kind_;
  std::size_t rows_, cols_, bands_;
  PsiMap psi_;
};

}  // namespace gapccot
