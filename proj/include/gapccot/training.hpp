#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gapccot/network.hpp"
#include "gapccot/random.hpp"
#include "gapccot/sensing.hpp"

namespace gapccot {

struct AugmentFlags {
  bool crop = true;
  bool rot90 = true;
  bool flip = true;
  std::size_t crop_size = 32;

  static AugmentFlags none() { return {false, false, false, 0}; }
};

struct TrainConfig {
  double lr0 = 1e-3;
  std::size_t decay_every = 10;  // epochs
  double decay_factor = 0.9;     // 10% reduction per step
  std::size_t epochs = 50;
  std::size_t batch = 1;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  NoiseSpec noise;
  AugmentFlags augment;
  double clip_grad_norm = 0.0;  // 0 disables clipping
};

/// lr0 * decay_factor^floor(epoch / decay_every), epochs counted from 0.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Piecewise-constant scenes with smooth spectra: a smooth-gradient
/// background plus random axis-aligned rectangles, each with its own
/// low-frequency spectral curve. Sample i is a pure function of (seed, i).
struct SyntheticFamily {
  std::size_t rows = 32;
  std::size_t cols = 32;
  std::size_t bands = 4;
  std::uint64_t seed = 0;

  SpectralCube sample(std::size_t index) const;
  std::vector<SpectralCube> samples(std::size_t first, std::size_t count) const;
};

/// Binary mask with P(1) = density, re-drawn if it comes out all zero.
Mask random_binary_mask(std::size_t rows, std::size_t cols, Rng& rng, double density = 0.5);

SpectralCube crop(const SpectralCube& cube, std::size_t row, std::size_t col, std::size_t rows,
                  std::size_t cols);
/// Counter-clockwise rotation by quarter_turns * 90 degrees.
SpectralCube rotate90(const SpectralCube& cube, int quarter_turns);
SpectralCube flip_horizontal(const SpectralCube& cube);
SpectralCube flip_vertical(const SpectralCube& cube);

/// Random crop, quarter-turn rotation and flips, identical for every band.
SpectralCube augment(const SpectralCube& cube, const AugmentFlags& flags, Rng& rng);

/// Adam with bias correction; moments kept in double.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One update. Parameters without a grad are treated as having zero grad.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState& state, double lr);

/// Scales all grads so their global L2 norm is at most max_norm.
template <typename T>
void clip_grad_norm(std::span<Parameter<T>> params, double max_norm);

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> loss_curve;  // "epoch\tloss" lines
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// End-to-end training of every stage on samples 0..cfg.samples-1 of the
/// family, with measurements simulated through `op`. Throws TrainingError
/// if the loss becomes non-finite.
template <typename T>
TrainReport train(GapCcotNet<T>& net, const SyntheticFamily& family, const SensingOperator& op,
                  const TrainConfig& cfg, const TrainOutputs& outputs = {});

/// Writes the loss curve file format.
void write_loss_curve(const std::filesystem::path& path, std::span<const double> losses);

}  // namespace gapccot
