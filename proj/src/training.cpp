#include "gapccot/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <string>

#include "gapccot/checkpoint.hpp"
#include "gapccot/errors.hpp"
#include "gapccot/io.hpp"

namespace gapccot {

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  const std::size_t every = std::max<std::size_t>(1, cfg.decay_every);
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / every));
}

// ---------------------------------------------------------------- data

namespace {

std::vector<double> smooth_spectrum(std::size_t bands, Rng& rng) {
  const double base = rng.uniform(0.15, 0.85);
  const double amp = rng.uniform(0.0, 0.3);
  const double freq = rng.uniform(0.1, 0.6);
  const double phase = rng.uniform();
  std::vector<double> s(bands);
  for (std::size_t b = 0; b < bands; ++b) {
    const double t = bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) : 0.0;
    s[b] = std::clamp(base + amp * std::sin(2.0 * std::numbers::pi * (freq * t + phase)), 0.02,
                      0.98);
  }
  return s;
}

}  // namespace

SpectralCube SyntheticFamily::sample(std::size_t index) const {
  if (rows == 0 || cols == 0 || bands == 0) throw UsageError("synthetic family has empty dims");
  Rng rng(derive_seed(seed, index));
  SpectralCube cube(rows, cols, bands);

  const auto background = smooth_spectrum(bands, rng);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t b = 0; b < bands; ++b) cube.at(r, c, b) = background[b];

  const auto count = rng.integer(3, 7);
  const std::int64_t min_h = std::max<std::int64_t>(1, static_cast<std::int64_t>(rows / 8));
  const std::int64_t min_w = std::max<std::int64_t>(1, static_cast<std::int64_t>(cols / 8));
  const std::int64_t max_h = std::max(min_h, static_cast<std::int64_t>(rows / 2));
  const std::int64_t max_w = std::max(min_w, static_cast<std::int64_t>(cols / 2));
  for (std::int64_t i = 0; i < count; ++i) {
    const auto h = rng.integer(min_h, max_h);
    const auto w = rng.integer(min_w, max_w);
    const auto r0 = rng.integer(0, static_cast<std::int64_t>(rows) - h);
    const auto c0 = rng.integer(0, static_cast<std::int64_t>(cols) - w);
    const auto spectrum = smooth_spectrum(bands, rng);
    for (auto r = r0; r < r0 + h; ++r)
      for (auto c = c0; c < c0 + w; ++c)
        for (std::size_t b = 0; b < bands; ++b)
          cube.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), b) = spectrum[b];
  }

  // Low-frequency illumination gradient over the whole scene.
  const double gy = rng.uniform(-0.25, 0.25);
  const double gx = rng.uniform(-0.25, 0.25);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double shade = gy * (static_cast<double>(r) / static_cast<double>(rows) - 0.5) +
                           gx * (static_cast<double>(c) / static_cast<double>(cols) - 0.5);
      for (std::size_t b = 0; b < bands; ++b)
        cube.at(r, c, b) = std::clamp(cube.at(r, c, b) + shade, 0.0, 1.0);
    }
  return cube;
}

std::vector<SpectralCube> SyntheticFamily::samples(std::size_t first, std::size_t count) const {
  std::vector<SpectralCube> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(first + i));
  return out;
}

Mask random_binary_mask(std::size_t rows, std::size_t cols, Rng& rng, double density) {
  Mask m(rows, cols);
  bool any = false;
  while (!any) {
    for (auto& v : m.data) {
      v = rng.uniform() < density ? 1.0 : 0.0;
      any = any || v != 0.0;
    }
  }
  return m;
}

// ---------------------------------------------------------------- augmentation

SpectralCube crop(const SpectralCube& cube, std::size_t row, std::size_t col, std::size_t rows,
                  std::size_t cols) {
  if (row + rows > cube.rows || col + cols > cube.cols) {
    throw UsageError("crop " + std::to_string(rows) + "x" + std::to_string(cols) + " at (" +
                     std::to_string(row) + "," + std::to_string(col) + ") exceeds cube " +
                     std::to_string(cube.rows) + "x" + std::to_string(cube.cols));
  }
  SpectralCube out(rows, cols, cube.bands);
  out.wavelengths = cube.wavelengths;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t b = 0; b < cube.bands; ++b) out.at(r, c, b) = cube.at(row + r, col + c, b);
  return out;
}

SpectralCube rotate90(const SpectralCube& cube, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return cube;
  SpectralCube src = k > 1 ? rotate90(cube, k - 1) : cube;
  // One counter-clockwise turn: out(r, c) = src(c, W - 1 - r).
  SpectralCube out(src.cols, src.rows, src.bands);
  out.wavelengths = src.wavelengths;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      for (std::size_t b = 0; b < src.bands; ++b)
        out.at(r, c, b) = src.at(c, src.cols - 1 - r, b);
  return out;
}

SpectralCube flip_horizontal(const SpectralCube& cube) {
  SpectralCube out = cube;
  for (std::size_t r = 0; r < cube.rows; ++r)
    for (std::size_t c = 0; c < cube.cols; ++c)
      for (std::size_t b = 0; b < cube.bands; ++b)
        out.at(r, c, b) = cube.at(r, cube.cols - 1 - c, b);
  return out;
}

SpectralCube flip_vertical(const SpectralCube& cube) {
  SpectralCube out = cube;
  for (std::size_t r = 0; r < cube.rows; ++r)
    for (std::size_t c = 0; c < cube.cols; ++c)
      for (std::size_t b = 0; b < cube.bands; ++b)
        out.at(r, c, b) = cube.at(cube.rows - 1 - r, c, b);
  return out;
}

SpectralCube augment(const SpectralCube& cube, const AugmentFlags& flags, Rng& rng) {
  SpectralCube out = cube;
  if (flags.crop) {
    const std::size_t n = flags.crop_size;
    if (n == 0 || n > cube.rows || n > cube.cols) {
      throw UsageError("augment: crop size " + std::to_string(n) + " does not fit cube " +
                       std::to_string(cube.rows) + "x" + std::to_string(cube.cols));
    }
    const auto r = rng.integer(0, static_cast<std::int64_t>(cube.rows - n));
    const auto c = rng.integer(0, static_cast<std::int64_t>(cube.cols - n));
    out = crop(out, static_cast<std::size_t>(r), static_cast<std::size_t>(c), n, n);
  }
  if (flags.rot90) {
    // Odd turns would transpose a non-square cube, so only half turns apply there.
    const bool square = out.rows == out.cols;
    const auto turns = square ? rng.integer(0, 3) : 2 * rng.integer(0, 1);
    out = rotate90(out, static_cast<int>(turns));
  }
  if (flags.flip) {
    if (rng.coin()) out = flip_horizontal(out);
    if (rng.coin()) out = flip_vertical(out);
  }
  return out;
}

// ---------------------------------------------------------------- optimizer

template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw UsageError("adam_step: optimizer state was built for a different parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[k]);
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double update = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
      data[k] = static_cast<T>(static_cast<double>(data[k]) - update);
    }
  }
}

template <typename T>
void clip_grad_norm(std::span<Parameter<T>> params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params)
    for (T g : p.tensor.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  total = std::sqrt(total);
  if (total <= max_norm || total == 0.0) return;
  const T factor = static_cast<T>(max_norm / total);
  for (auto& p : params)
    if (p.tensor.has_grad())
      for (T& g : p.tensor.mutable_grad()) g *= factor;
}

// ---------------------------------------------------------------- trainer

void write_loss_curve(const std::filesystem::path& path, std::span<const double> losses) {
  std::string text;
  char line[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu\t%.9g\n", e + 1, losses[e]);
    text += line;
  }
  write_file(path, text);
}

template <typename T>
TrainReport train(GapCcotNet<T>& net, const SyntheticFamily& family, const SensingOperator& op,
                  const TrainConfig& cfg, const TrainOutputs& outputs) {
  if (!(cfg.lr0 >= 0.0)) throw UsageError("train: lr0 must be >= 0");
  if (cfg.epochs == 0) throw UsageError("train: epochs must be >= 1");
  if (cfg.batch == 0 || cfg.samples == 0) throw UsageError("train: batch and samples must be >= 1");
  if (family.bands != op.bands()) {
    throw DimensionError("train: family has " + std::to_string(family.bands) +
                         " bands, operator " + std::to_string(op.bands()));
  }

  const auto data = family.samples(0, cfg.samples);
  Rng order_rng(derive_seed(cfg.seed, 101));
  Rng augment_rng(derive_seed(cfg.seed, 102));
  Rng noise_rng(derive_seed(cfg.seed, 103));

  auto params = net.parameters();
  AdamState adam;
  TrainReport report;
  std::vector<std::size_t> order(data.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng.engine());

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<SpectralCube> truth;
      std::vector<Measurement> ys;
      for (std::size_t i = start; i < end; ++i) {
        truth.push_back(augment(data[order[i]], cfg.augment, augment_rng));
        ys.push_back(op.forward(truth.back(), cfg.noise, noise_rng));
      }
      for (auto& p : params) p.tensor.zero_grad();
      Tensor<T> loss = mse_loss(net.forward(ys, op), cubes_to_tensor<T>(truth));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw TrainingError("training loss became non-finite in epoch " +
                                std::to_string(epoch + 1),
                            epoch + 1);
      }
      loss.backward();
      if (cfg.clip_grad_norm > 0.0) clip_grad_norm<T>(params, cfg.clip_grad_norm);
      adam_step<T>(params, adam, lr);
      loss_sum += value;
      ++batches;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }

  if (outputs.loss_curve) write_loss_curve(*outputs.loss_curve, report.epoch_loss);
  if (outputs.checkpoint) save_checkpoint(net, *outputs.checkpoint);
  return report;
}

template void adam_step(std::span<Parameter<float>>, AdamState&, double);
template void adam_step(std::span<Parameter<double>>, AdamState&, double);
template void clip_grad_norm(std::span<Parameter<float>>, double);
template void clip_grad_norm(std::span<Parameter<double>>, double);
template TrainReport train(GapCcotNet<float>&, const SyntheticFamily&, const SensingOperator&,
                           const TrainConfig&, const TrainOutputs&);
template TrainReport train(GapCcotNet<double>&, const SyntheticFamily&, const SensingOperator&,
                           const TrainConfig&, const TrainOutputs&);

}  // namespace gapccot
