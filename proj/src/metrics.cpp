#include "gapccot/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gapccot/errors.hpp"

namespace gapccot {

namespace {

void check_pair(const SpectralCube& x, const SpectralCube& ref, const char* what) {
  if (!x.same_dims(ref)) {
    throw DimensionError(std::string(what) + ": cube dims differ (" + std::to_string(x.rows) +
                         "x" + std::to_string(x.cols) + "x" + std::to_string(x.bands) + " vs " +
                         std::to_string(ref.rows) + "x" + std::to_string(ref.cols) + "x" +
                         std::to_string(ref.bands) + ")");
  }
}

double psnr_from_mse(double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> gaussian_kernel(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= s;
  return k;
}

// Separable 'valid' filtering of one band plane.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t rows,
                                 std::size_t cols, const std::vector<double>& k) {
  const std::size_t n = k.size(), orows = rows - n + 1, ocols = cols - n + 1;
  std::vector<double> tmp(rows * ocols, 0.0), out(orows * ocols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += k[j] * img[r * cols + c + j];
      tmp[r * ocols + c] = acc;
    }
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp[(r + i) * ocols + c];
      out[r * ocols + c] = acc;
    }
  return out;
}

}  // namespace

double psnr(const SpectralCube& x, const SpectralCube& ref) {
  check_pair(x, ref, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - ref.data[i];
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(x.data.size()));
}

std::vector<double> psnr_per_band(const SpectralCube& x, const SpectralCube& ref) {
  check_pair(x, ref, "psnr");
  std::vector<double> sums(x.bands, 0.0);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - ref.data[i];
    sums[i % x.bands] += d * d;
  }
  std::vector<double> out;
  for (double s : sums) out.push_back(psnr_from_mse(s / static_cast<double>(x.rows * x.cols)));
  return out;
}

std::vector<double> ssim_per_band(const SpectralCube& x, const SpectralCube& ref,
                                  const SsimOptions& opt) {
  check_pair(x, ref, "ssim");
  if (x.rows < opt.window || x.cols < opt.window) {
    throw UsageError("ssim: cube " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                     " smaller than the " + std::to_string(opt.window) + "-pixel window");
  }
  const auto k = gaussian_kernel(opt.window, opt.sigma);
  const double c1 = std::pow(opt.k1 * opt.data_range, 2);
  const double c2 = std::pow(opt.k2 * opt.data_range, 2);
  const std::size_t plane = x.rows * x.cols;

  std::vector<double> out;
  std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
  for (std::size_t band = 0; band < x.bands; ++band) {
    for (std::size_t p = 0; p < plane; ++p) {
      a[p] = x.data[p * x.bands + band];
      b[p] = ref.data[p * x.bands + band];
      aa[p] = a[p] * a[p];
      bb[p] = b[p] * b[p];
      ab[p] = a[p] * b[p];
    }
    const auto mu_a = filter_valid(a, x.rows, x.cols, k);
    const auto mu_b = filter_valid(b, x.rows, x.cols, k);
    const auto e_aa = filter_valid(aa, x.rows, x.cols, k);
    const auto e_bb = filter_valid(bb, x.rows, x.cols, k);
    const auto e_ab = filter_valid(ab, x.rows, x.cols, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    out.push_back(acc / static_cast<double>(mu_a.size()));
  }
  return out;
}

double ssim(const SpectralCube& x, const SpectralCube& ref, const SsimOptions& opt) {
  const auto per_band = ssim_per_band(x, ref, opt);
  return std::accumulate(per_band.begin(), per_band.end(), 0.0) /
         static_cast<double>(per_band.size());
}

QualityReport evaluate(const SpectralCube& x, const SpectralCube& ref) {
  QualityReport r;
  r.psnr_db = psnr(x, ref);
  r.psnr_per_band = psnr_per_band(x, ref);
  r.ssim_per_band = ssim_per_band(x, ref);
  r.ssim = std::accumulate(r.ssim_per_band.begin(), r.ssim_per_band.end(), 0.0) /
           static_cast<double>(r.ssim_per_band.size());
  return r;
}

}  // namespace gapccot
