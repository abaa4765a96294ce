#include "gapccot/sensing.hpp"

#include <cmath>
#include <string>

#include "gapccot/errors.hpp"

namespace gapccot {

namespace {

void check_mask(const Mask& mask) {
  if (mask.rows == 0 || mask.cols == 0) throw DimensionError("mask has zero extent");
  bool nonzero = false;
  for (double v : mask.data) {
    if (!std::isfinite(v)) throw UsageError("mask contains non-finite values");
    nonzero = nonzero || v != 0.0;
  }
  if (!nonzero) throw UsageError("mask is identically zero");
}

std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

SpectralCube modulate(const SpectralCube& cube, const Mask& mask) {
  if (mask.rows != cube.rows || mask.cols != cube.cols) {
    throw DimensionError("modulate: mask " + dims(mask.rows, mask.cols) +
                         " does not match cube spatial dims " + dims(cube.rows, cube.cols));
  }
  SpectralCube out = cube;
  for (std::size_t r = 0; r < cube.rows; ++r)
    for (std::size_t c = 0; c < cube.cols; ++c)
      for (std::size_t b = 0; b < cube.bands; ++b) out.at(r, c, b) *= mask.at(r, c);
  return out;
}

std::size_t measurement_cols(std::size_t cols, std::size_t bands, std::size_t dispersion) {
  return cols + dispersion * (bands == 0 ? 0 : bands - 1);
}

SpectralCube shift(const SpectralCube& cube, std::size_t dispersion) {
  SpectralCube out(cube.rows, measurement_cols(cube.cols, cube.bands, dispersion), cube.bands);
  out.wavelengths = cube.wavelengths;
  for (std::size_t r = 0; r < cube.rows; ++r)
    for (std::size_t c = 0; c < cube.cols; ++c)
      for (std::size_t b = 0; b < cube.bands; ++b)
        out.at(r, c + dispersion * b, b) = cube.at(r, c, b);
  return out;
}

SpectralCube unshift(const SpectralCube& shifted, std::size_t dispersion, std::size_t cols) {
  if (measurement_cols(cols, shifted.bands, dispersion) != shifted.cols) {
    throw DimensionError("unshift: width " + std::to_string(shifted.cols) +
                         " inconsistent with " + std::to_string(cols) + " columns, " +
                         std::to_string(shifted.bands) + " bands, step " +
                         std::to_string(dispersion));
  }
  SpectralCube out(shifted.rows, cols, shifted.bands);
  out.wavelengths = shifted.wavelengths;
  for (std::size_t r = 0; r < shifted.rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t b = 0; b < shifted.bands; ++b)
        out.at(r, c, b) = shifted.at(r, c + dispersion * b, b);
  return out;
}

void add_noise(Measurement& y, const NoiseSpec& noise, Rng& rng) {
  switch (noise.kind) {
    case NoiseSpec::Kind::None:
      return;
    case NoiseSpec::Kind::Gaussian:
      if (noise.sigma < 0.0) throw UsageError("gaussian noise sigma must be >= 0");
      for (auto& v : y.data) v += rng.normal(0.0, noise.sigma);
      return;
    case NoiseSpec::Kind::Shot:
      if (noise.peak <= 0.0) throw UsageError("shot noise peak must be > 0");
      for (auto& v : y.data)
        v = static_cast<double>(rng.poisson(std::max(v, 0.0) * noise.peak)) / noise.peak;
      return;
  }
}

SensingOperator::SensingOperator(std::variant<Cassi, Video> kind, std::size_t rows,
                                 std::size_t cols, std::size_t bands)
    : kind_(std::move(kind)), rows_(rows), cols_(cols), bands_(bands) {
  const std::size_t d = is_cassi() ? std::get<Cassi>(kind_).dispersion : 0;
  psi_ = PsiMap(rows_, gapccot::measurement_cols(cols_, bands_, d));
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c)
      for (std::size_t b = 0; b < bands_; ++b) {
        const double w = weight(r, c, b);
        psi_.at(r, target_col(c, b)) += w * w;
      }
}

SensingOperator SensingOperator::cassi(Mask mask, std::size_t bands, std::size_t dispersion) {
  check_mask(mask);
  if (bands == 0) throw UsageError("cassi operator needs at least one band");
  const std::size_t rows = mask.rows, cols = mask.cols;
  return SensingOperator(Cassi{std::move(mask), dispersion}, rows, cols, bands);
}

SensingOperator SensingOperator::video(std::vector<Mask> frames) {
  if (frames.empty()) throw UsageError("video operator needs at least one mask frame");
  for (const auto& m : frames) {
    check_mask(m);
    if (m.rows != frames[0].rows || m.cols != frames[0].cols) {
      throw DimensionError("video operator: frame mask " + dims(m.rows, m.cols) +
                           " differs from " + dims(frames[0].rows, frames[0].cols));
    }
  }
  const std::size_t rows = frames[0].rows, cols = frames[0].cols, t = frames.size();
  return SensingOperator(Video{std::move(frames)}, rows, cols, t);
}

double SensingOperator::weight(std::size_t r, std::size_t c, std::size_t b) const {
  if (const auto* k = std::get_if<Cassi>(&kind_)) return k->mask.at(r, c);
  return std::get<Video>(kind_).frames[b].at(r, c);
}

std::size_t SensingOperator::target_col(std::size_t c, std::size_t b) const {
  if (const auto* k = std::get_if<Cassi>(&kind_)) return c + k->dispersion * b;
  return c;
}

void SensingOperator::check_cube(const SpectralCube& cube) const {
  if (cube.rows != rows_ || cube.cols != cols_ || cube.bands != bands_) {
    throw DimensionError("cube " + dims(cube.rows, cube.cols) + "x" +
                         std::to_string(cube.bands) + " does not match operator " +
                         dims(rows_, cols_) + "x" + std::to_string(bands_));
  }
}

void SensingOperator::check_measurement(const Measurement& y) const {
  if (y.rows != psi_.rows || y.cols != psi_.cols) {
    throw DimensionError("measurement " + dims(y.rows, y.cols) + " does not match operator " +
                         dims(psi_.rows, psi_.cols));
  }
}

Measurement SensingOperator::forward(const SpectralCube& cube) const {
  check_cube(cube);
  Measurement y(psi_.rows, psi_.cols);
  // Band-major accumulation keeps the summation order fixed.
  for (std::size_t b = 0; b < bands_; ++b)
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c)
        y.at(r, target_col(c, b)) += weight(r, c, b) * cube.at(r, c, b);
  return y;
}

Measurement SensingOperator::forward(const SpectralCube& cube, const NoiseSpec& noise,
                                     Rng& rng) const {
  Measurement y = forward(cube);
  add_noise(y, noise, rng);
  return y;
}

SpectralCube SensingOperator::adjoint(const Measurement& y) const {
  check_measurement(y);
  SpectralCube x(rows_, cols_, bands_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c)
      for (std::size_t b = 0; b < bands_; ++b)
        x.at(r, c, b) = weight(r, c, b) * y.at(r, target_col(c, b));
  return x;
}

}  // namespace gapccot
