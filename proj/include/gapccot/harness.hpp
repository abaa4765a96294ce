#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gapccot/network.hpp"
#include "gapccot/sensing.hpp"
#include "gapccot/training.hpp"

namespace gapccot {

struct EvalSummary {
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Mean PSNR/SSIM of the network's clipped reconstructions over `eval_set`,
/// each measured noiselessly through `op`.
template <typename T>
EvalSummary evaluate_network(const GapCcotNet<T>& net, const SensingOperator& op,
                             std::span<const SpectralCube> eval_set);

/// Same for GAP-TV with the given stage count.
EvalSummary evaluate_gap_tv(const SensingOperator& op, std::span<const SpectralCube> eval_set,
                            std::size_t stages = 30);

struct MaskRow {
  std::string mask_id;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Evaluates a trained net under every mask without retraining. masks[0]
/// is the training mask and yields the first row ("train"); the others are
/// reported as new1, new2, ...
template <typename T>
std::vector<MaskRow> mask_flexibility_harness(const GapCcotNet<T>& net,
                                              std::span<const Mask> masks,
                                              std::span<const SpectralCube> eval_set,
                                              std::size_t dispersion);

/// TSV table with a drop_db column relative to the first row.
std::string format_mask_table(std::span<const MaskRow> rows);

/// `count` random crops of a larger random binary mask, the way unseen
/// masks are cut from one physical aperture.
std::vector<Mask> cropped_masks(std::size_t rows, std::size_t cols, std::size_t count,
                                std::uint64_t seed, std::size_t source_scale = 4);

struct StageRow {
  std::size_t stages = 0;
  double psnr = 0.0;
};

/// Trains one float network per stage count with the same budget and seed,
/// then reports held-out PSNR.
std::vector<StageRow> stage_sweep_harness(const SyntheticFamily& family,
                                          const SensingOperator& op,
                                          std::span<const std::size_t> stage_counts,
                                          const DenoiserNetConfig& denoiser,
                                          const TrainConfig& train_cfg,
                                          std::span<const SpectralCube> eval_set);

std::string format_stage_table(std::span<const StageRow> rows);

}  // namespace gapccot
