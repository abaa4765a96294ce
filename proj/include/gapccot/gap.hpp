#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gapccot/sensing.hpp"

namespace gapccot {

/// Denoiser plug-in: (estimate, stage index) -> estimate of the same dims.
using Denoiser = std::function<SpectralCube(const SpectralCube&, std::size_t)>;

struct GapConfig {
  std::size_t stages = 30;
  Denoiser denoiser;
  bool record_trace = false;
};

struct GapResult {
  SpectralCube cube;
  /// ||y - H x_k|| over psi > 0 pixels, one entry per stage, measured right
  /// after that stage's projection. Empty unless record_trace is set.
  std::vector<double> trace;
};

/// Euclidean projection of v onto {x : Hx = y}: x = v + H^T((y - Hv) / psi).
/// Measurement pixels with psi == 0 contribute nothing.
SpectralCube project(const SpectralCube& v, const Measurement& y, const SensingOperator& op);

/// H^T(y / psi) with the same zero-psi guard. The non-iterative baseline.
SpectralCube normalized_adjoint(const Measurement& y, const SensingOperator& op);

/// ||(y - Hx) restricted to psi > 0||_2.
double measurement_residual(const SpectralCube& x, const Measurement& y,
                            const SensingOperator& op);

/// Per-band anisotropic TV denoising: approximately minimizes
/// 0.5 ||u - v||^2 + weight * (sum |u(r+1,c) - u(r,c)| + |u(r,c+1) - u(r,c)|)
/// by projected gradient ascent on the dual.
SpectralCube tv_denoise(const SpectralCube& v, double weight, std::size_t iters);

/// Alternates projection and denoising K times starting from v = H^T y.
/// The returned cube is the last denoiser output clipped to [0, 1].
GapResult gap_reconstruct(const Measurement& y, const SensingOperator& op,
                          const GapConfig& config);

/// Convenience GAP-TV configuration.
GapConfig gap_tv_config(std::size_t stages = 30, double weight = 0.1, std::size_t tv_iters = 30);

void clip01(SpectralCube& cube);

}  // namespace gapccot
