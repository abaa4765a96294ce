#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gapccot/network.hpp"
#include "gapccot/random.hpp"
#include "gapccot/sensing.hpp"

namespace testsupport {

using gapccot::Mask;
using gapccot::Measurement;
using gapccot::Rng;
using gapccot::SpectralCube;

inline SpectralCube random_cube(std::size_t r, std::size_t c, std::size_t b, Rng& rng) {
  SpectralCube x(r, c, b);
  for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
  return x;
}

inline Mask random_mask(std::size_t r, std::size_t c, Rng& rng, bool binary = false) {
  Mask m(r, c);
  for (auto& v : m.data) v = binary ? (rng.coin() ? 1.0 : 0.0) : rng.uniform(0.0, 1.0);
  m.data[0] = 1.0;  // never all zero
  return m;
}

inline Measurement random_measurement(std::size_t r, std::size_t c, Rng& rng) {
  Measurement y(r, c);
  for (auto& v : y.data) v = rng.uniform(-1.0, 1.0);
  return y;
}

template <typename T>
std::vector<T> values(const gapccot::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

/// Explicit sensing matrix, built entry by entry from the block structure:
/// band m of the scene lands in measurement column c + d*m, weighted by the
/// mask at the scene pixel. Columns follow the cube's band-last layout.
struct DenseH {
  std::size_t m_rows = 0, n_cols = 0;
  std::vector<double> a;  // row-major m_rows x n_cols

  double& at(std::size_t i, std::size_t j) { return a[i * n_cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * n_cols + j]; }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y(m_rows, 0.0);
    for (std::size_t i = 0; i < m_rows; ++i)
      for (std::size_t j = 0; j < n_cols; ++j) y[i] += at(i, j) * x[j];
    return y;
  }
  std::vector<double> apply_t(const std::vector<double>& y) const {
    std::vector<double> x(n_cols, 0.0);
    for (std::size_t i = 0; i < m_rows; ++i)
      for (std::size_t j = 0; j < n_cols; ++j) x[j] += at(i, j) * y[i];
    return x;
  }
  std::vector<double> diag_hht() const {
    std::vector<double> d(m_rows, 0.0);
    for (std::size_t i = 0; i < m_rows; ++i)
      for (std::size_t j = 0; j < n_cols; ++j) d[i] += at(i, j) * at(i, j);
    return d;
  }
  /// Full H H^T, to check that it is diagonal.
  std::vector<double> hht() const {
    std::vector<double> g(m_rows * m_rows, 0.0);
    for (std::size_t i = 0; i < m_rows; ++i)
      for (std::size_t k = 0; k < m_rows; ++k)
        for (std::size_t j = 0; j < n_cols; ++j) g[i * m_rows + k] += at(i, j) * at(k, j);
    return g;
  }
};

inline DenseH dense_cassi(const Mask& mask, std::size_t bands, std::size_t d) {
  const std::size_t R = mask.rows, C = mask.cols, W = C + d * (bands - 1);
  DenseH h;
  h.m_rows = R * W;
  h.n_cols = R * C * bands;
  h.a.assign(h.m_rows * h.n_cols, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t m = 0; m < bands; ++m)
        h.at(r * W + c + d * m, (r * C + c) * bands + m) = mask.at(r, c);
  return h;
}

inline DenseH dense_video(const std::vector<Mask>& frames) {
  const std::size_t R = frames[0].rows, C = frames[0].cols, T = frames.size();
  DenseH h;
  h.m_rows = R * C;
  h.n_cols = R * C * T;
  h.a.assign(h.m_rows * h.n_cols, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) h.at(r * C + c, (r * C + c) * T + t) = frames[t].at(r, c);
  return h;
}


/// Plain nested-loop convolution on one [C, H, W] image with zero padding.
inline std::vector<double> naive_conv_chw(const std::vector<double>& x, std::size_t C, std::size_t H,
                                          std::size_t W, const gapccot::Conv2dLayer<double>& layer) {
  const auto& w = layer.weight;
  const std::size_t O = w.dim(0), Cg = w.dim(1), K = w.dim(2);
  const std::size_t groups = C / Cg, pad = layer.options.padding;
  std::vector<double> out(O * H * W, 0.0);
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        double acc = layer.bias.data()[o];
        const std::size_t g = o / (O / groups);
        for (std::size_t ci = 0; ci < Cg; ++ci)
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long rr = static_cast<long>(r + ky) - static_cast<long>(pad);
              const long cc = static_cast<long>(c + kx) - static_cast<long>(pad);
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W))
                continue;
              acc += w.data()[((o * Cg + ci) * K + ky) * K + kx] *
                     x[((g * Cg + ci) * H + rr) * W + cc];
            }
        out[(o * H + r) * W + c] = acc;
      }
  return out;
}

struct CotOracle {
  std::vector<double> dynamic;  // K2
  std::vector<double> output;
};

/// Per-pixel evaluation of a CoT block on a single [C, H, W] image: keys,
/// queries and values by direct convolution, attention logits per pixel,
/// softmax over each head's window, then an explicit window sum.
inline CotOracle naive_cot(const gapccot::CotBlock<double>& blk, const std::vector<double>& x,
                           std::size_t C, std::size_t H, std::size_t W) {
  const std::size_t k = blk.kernel, heads = blk.heads, kk = k * k, ch = C / heads;
  const long half = static_cast<long>(k / 2);
  auto lrelu = [](double v) { return v > 0 ? v : 0.01 * v; };
  auto k1 = naive_conv_chw(x, C, H, W, blk.key);
  auto q = naive_conv_chw(x, C, H, W, blk.query);
  auto v = naive_conv_chw(x, C, H, W, blk.value);
  std::vector<double> kq(k1);
  kq.insert(kq.end(), q.begin(), q.end());
  auto th = naive_conv_chw(kq, 2 * C, H, W, blk.theta);
  for (auto& e : th) e = lrelu(e);
  auto logits = naive_conv_chw(th, C, H, W, blk.delta);  // [heads*kk, H, W]

  CotOracle res;
  res.dynamic.assign(C * H * W, 0.0);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      for (std::size_t h = 0; h < heads; ++h) {
        double mx = -1e300;
        for (std::size_t j = 0; j < kk; ++j) mx = std::max(mx, logits[((h * kk + j) * H + r) * W + c]);
        std::vector<double> a(kk);
        double z = 0.0;
        for (std::size_t j = 0; j < kk; ++j) z += a[j] = std::exp(logits[((h * kk + j) * H + r) * W + c] - mx);
        for (auto& e : a) e /= z;
        for (std::size_t ci = h * ch; ci < (h + 1) * ch; ++ci) {
          double acc = 0.0;
          for (std::size_t j = 0; j < kk; ++j) {
            const long rr = static_cast<long>(r) + static_cast<long>(j / k) - half;
            const long cc = static_cast<long>(c) + static_cast<long>(j % k) - half;
            if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
            acc += a[j] * v[(ci * H + rr) * W + cc];
          }
          res.dynamic[(ci * H + r) * W + c] = acc;
        }
      }

  std::vector<double> pooled(C, 0.0);
  for (std::size_t ci = 0; ci < C; ++ci) {
    for (std::size_t i = 0; i < H * W; ++i) pooled[ci] += k1[ci * H * W + i] + res.dynamic[ci * H * W + i];
    pooled[ci] /= static_cast<double>(H * W);
  }
  auto g = naive_conv_chw(pooled, C, 1, 1, blk.fuse);
  res.output.resize(C * H * W);
  for (std::size_t ci = 0; ci < C; ++ci) {
    const double gate = 1.0 / (1.0 + std::exp(-g[ci]));
    for (std::size_t i = 0; i < H * W; ++i)
      res.output[ci * H * W + i] = gate * k1[ci * H * W + i] + (1.0 - gate) * res.dynamic[ci * H * W + i];
  }
  return res;
}

}  // namespace testsupport

#include "gapccot/gradcheck.hpp"
#include "gapccot/ops.hpp"

namespace testsupport {

/// Finite-difference check of a whole CCoT block: every parameter plus the
/// input, loss = sum(block(x) * R) for a fixed random R.
inline double ccot_block_gradcheck(std::uint64_t seed, std::size_t heads = 2,
                                   std::size_t kernel = 3) {
  using TD = gapccot::Tensor<double>;
  Rng rng(seed);
  gapccot::CCoTBlockConfig cfg{3, 8, 2, kernel, heads, 2};
  gapccot::CCoTBlock<double> blk(cfg, rng);
  std::vector<gapccot::Parameter<double>> params;
  blk.collect("b", params);
  std::vector<TD> inputs;
  for (auto& p : params) {
    // Non-zero biases so every path is exercised.
    for (auto& v : p.tensor.mutable_data()) v += rng.uniform(-0.3, 0.3);
    p.tensor.node()->requires_grad = true;
    inputs.push_back(p.tensor);
  }
  std::vector<double> xd(2 * 3 * 8 * 8);
  for (auto& v : xd) v = rng.uniform(-1.0, 1.0);
  inputs.emplace_back(gapccot::Shape{2, 3, 8, 8}, xd, true);
  std::vector<double> rd(2 * 8 * 4 * 4);
  for (auto& v : rd) v = rng.uniform(-1.0, 1.0);
  TD weights({2, 8, 4, 4}, rd);
  auto fn = [&](const std::vector<TD>& in) { return gapccot::sum(gapccot::mul(blk(in.back()), weights)); };
  return gapccot::gradient_relative_error(fn, inputs);
}

}  // namespace testsupport
