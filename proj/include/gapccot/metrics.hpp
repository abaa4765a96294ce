#pragma once

#include <cstddef>
#include <vector>

#include "gapccot/sensing.hpp"

namespace gapccot {

struct QualityReport {
  double psnr_db = 0.0;  // +inf when the cubes are identical
  double ssim = 0.0;
  std::vector<double> psnr_per_band;
  std::vector<double> ssim_per_band;
};

/// 10 log10(peak^2 / MSE) over the whole cube, peak 1.
double psnr(const SpectralCube& x, const SpectralCube& ref);
std::vector<double> psnr_per_band(const SpectralCube& x, const SpectralCube& ref);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Gaussian-weighted SSIM over every fully-contained window, averaged over
/// windows within a band and then over bands.
double ssim(const SpectralCube& x, const SpectralCube& ref, const SsimOptions& opt = {});
std::vector<double> ssim_per_band(const SpectralCube& x, const SpectralCube& ref,
                                  const SsimOptions& opt = {});

QualityReport evaluate(const SpectralCube& x, const SpectralCube& ref);

}  // namespace gapccot
