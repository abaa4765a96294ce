#include "gapccot/gap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gapccot/errors.hpp"

namespace gapccot {

namespace {

Measurement guarded_ratio(const Measurement& num, const PsiMap& psi) {
  Measurement out(num.rows, num.cols);
  for (std::size_t i = 0; i < num.data.size(); ++i)
    out.data[i] = psi.data[i] > 0.0 ? num.data[i] / psi.data[i] : 0.0;
  return out;
}

}  // namespace

SpectralCube project(const SpectralCube& v, const Measurement& y, const SensingOperator& op) {
  op.check_measurement(y);
  Measurement residual = op.forward(v);
  for (std::size_t i = 0; i < residual.data.size(); ++i)
    residual.data[i] = y.data[i] - residual.data[i];
  SpectralCube correction = op.adjoint(guarded_ratio(residual, op.psi()));
  SpectralCube x = v;
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += correction.data[i];
  return x;
}

SpectralCube normalized_adjoint(const Measurement& y, const SensingOperator& op) {
  op.check_measurement(y);
  return op.adjoint(guarded_ratio(y, op.psi()));
}

double measurement_residual(const SpectralCube& x, const Measurement& y,
                            const SensingOperator& op) {
  Measurement hx = op.forward(x);
  op.check_measurement(y);
  double acc = 0.0;
  for (std::size_t i = 0; i < hx.data.size(); ++i) {
    if (op.psi().data[i] <= 0.0) continue;
    const double r = y.data[i] - hx.data[i];
    acc += r * r;
  }
  return std::sqrt(acc);
}

SpectralCube tv_denoise(const SpectralCube& v, double weight, std::size_t iters) {
  if (!(weight > 0.0)) throw UsageError("tv_denoise: weight must be > 0");
  if (iters == 0) throw UsageError("tv_denoise: iters must be >= 1");

  const std::size_t R = v.rows, C = v.cols;
  // ||D^T D|| <= 8 for 2-d forward differences.
  const double tau = 1.0 / 8.0;
  SpectralCube out = v;
  std::vector<double> u(R * C), qy(R * C), qx(R * C);

  for (std::size_t b = 0; b < v.bands; ++b) {
    std::fill(qy.begin(), qy.end(), 0.0);
    std::fill(qx.begin(), qx.end(), 0.0);
    auto primal = [&] {
      // u = v - D^T q, where (D^T q)(r,c) = q(r-1,c) - q(r,c) per axis.
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = r * C + c;
          double dtq = 0.0;
          if (r + 1 < R) dtq -= qy[i];
          if (r > 0) dtq += qy[i - C];
          if (c + 1 < C) dtq -= qx[i];
          if (c > 0) dtq += qx[i - 1];
          u[i] = v.at(r, c, b) - dtq;
        }
    };
    for (std::size_t it = 0; it < iters; ++it) {
      primal();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = r * C + c;
          if (r + 1 < R) qy[i] = std::clamp(qy[i] + tau * (u[i + C] - u[i]), -weight, weight);
          if (c + 1 < C) qx[i] = std::clamp(qx[i] + tau * (u[i + 1] - u[i]), -weight, weight);
        }
    }
    primal();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) out.at(r, c, b) = u[r * C + c];
  }
  return out;
}

void clip01(SpectralCube& cube) {
  for (auto& v : cube.data) v = std::clamp(v, 0.0, 1.0);
}

GapResult gap_reconstruct(const Measurement& y, const SensingOperator& op,
                          const GapConfig& config) {
  if (config.stages == 0) throw UsageError("gap_reconstruct: stages must be >= 1");
  if (!config.denoiser) throw UsageError("gap_reconstruct: no denoiser configured");

  GapResult result;
  SpectralCube v = op.adjoint(y);
  for (std::size_t k = 0; k < config.stages; ++k) {
    SpectralCube x = project(v, y, op);
    if (config.record_trace) result.trace.push_back(measurement_residual(x, y, op));
    v = config.denoiser(x, k);
    if (!v.same_dims(x)) {
      throw ContractError("denoiser at stage " + std::to_string(k) +
                          " changed cube dims");
    }
    if (std::any_of(v.data.begin(), v.data.end(), [](double d) { return !std::isfinite(d); })) {
      throw ContractError("denoiser at stage " + std::to_string(k) +
                          " produced non-finite values");
    }
  }
  clip01(v);
  result.cube = std::move(v);
  return result;
}

GapConfig gap_tv_config(std::size_t stages, double weight, std::size_t tv_iters) {
  GapConfig cfg;
  cfg.stages = stages;
  cfg.denoiser = [weight, tv_iters](const SpectralCube& x, std::size_t) {
    return tv_denoise(x, weight, tv_iters);
  };
  return cfg;
}

}  // namespace gapccot
