#include "gapccot/harness.hpp"

#include <cstdio>

#include "gapccot/errors.hpp"
#include "gapccot/gap.hpp"
#include "gapccot/metrics.hpp"

namespace gapccot {

namespace {

template <typename Fn>
EvalSummary summarize(const SensingOperator& op, std::span<const SpectralCube> eval_set,
                      Fn&& reconstruct) {
  if (eval_set.empty()) throw UsageError("evaluation set is empty");
  EvalSummary s;
  for (const auto& truth : eval_set) {
    SpectralCube x = reconstruct(op.forward(truth));
    clip01(x);
    s.mean_psnr += psnr(x, truth);
    s.mean_ssim += ssim(x, truth);
  }
  s.mean_psnr /= static_cast<double>(eval_set.size());
  s.mean_ssim /= static_cast<double>(eval_set.size());
  return s;
}

}  // namespace

template <typename T>
EvalSummary evaluate_network(const GapCcotNet<T>& net, const SensingOperator& op,
                             std::span<const SpectralCube> eval_set) {
  return summarize(op, eval_set, [&](const Measurement& y) { return net.reconstruct(y, op); });
}

EvalSummary evaluate_gap_tv(const SensingOperator& op, std::span<const SpectralCube> eval_set,
                            std::size_t stages) {
  const GapConfig cfg = gap_tv_config(stages);
  return summarize(op, eval_set,
                   [&](const Measurement& y) { return gap_reconstruct(y, op, cfg).cube; });
}

template <typename T>
std::vector<MaskRow> mask_flexibility_harness(const GapCcotNet<T>& net,
                                              std::span<const Mask> masks,
                                              std::span<const SpectralCube> eval_set,
                                              std::size_t dispersion) {
  if (masks.empty()) throw UsageError("mask harness: no masks");
  std::vector<MaskRow> rows;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].rows != masks[0].rows || masks[i].cols != masks[0].cols) {
      throw DimensionError("mask harness: mask " + std::to_string(i) + " is " +
                           std::to_string(masks[i].rows) + "x" + std::to_string(masks[i].cols) +
                           ", expected " + std::to_string(masks[0].rows) + "x" +
                           std::to_string(masks[0].cols));
    }
    const auto op = SensingOperator::cassi(masks[i], net.config().denoiser.bands, dispersion);
    const auto s = evaluate_network(net, op, eval_set);
    rows.push_back({i == 0 ? "train" : "new" + std::to_string(i), s.mean_psnr, s.mean_ssim});
  }
  return rows;
}

std::string format_mask_table(std::span<const MaskRow> rows) {
  std::string out = "mask\tpsnr_db\tssim\tdrop_db\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s\t%.4f\t%.4f\t%.4f\n", r.mask_id.c_str(), r.psnr, r.ssim,
                  rows.front().psnr - r.psnr);
    out += line;
  }
  return out;
}

std::vector<Mask> cropped_masks(std::size_t rows, std::size_t cols, std::size_t count,
                                std::uint64_t seed, std::size_t source_scale) {
  Rng rng(seed);
  const Mask source = random_binary_mask(rows * source_scale, cols * source_scale, rng);
  std::vector<Mask> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto r0 = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(source.rows - rows)));
    const auto c0 = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(source.cols - cols)));
    Mask m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = source.at(r0 + r, c0 + c);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<StageRow> stage_sweep_harness(const SyntheticFamily& family,
                                          const SensingOperator& op,
                                          std::span<const std::size_t> stage_counts,
                                          const DenoiserNetConfig& denoiser,
                                          const TrainConfig& train_cfg,
                                          std::span<const SpectralCube> eval_set) {
  std::vector<StageRow> rows;
  for (std::size_t k : stage_counts) {
    if (k == 0) throw UsageError("stage sweep: stage counts must be >= 1");
    GapCcotNet<float> net(GapCcotConfig{k, denoiser, false}, train_cfg.seed);
    train(net, family, op, train_cfg);
    rows.push_back({k, evaluate_network(net, op, eval_set).mean_psnr});
  }
  return rows;
}

std::string format_stage_table(std::span<const StageRow> rows) {
  std::string out = "stages\tpsnr_db\n";
  char line[64];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu\t%.4f\n", r.stages, r.psnr);
    out += line;
  }
  return out;
}

template EvalSummary evaluate_network(const GapCcotNet<float>&, const SensingOperator&,
                                      std::span<const SpectralCube>);
template EvalSummary evaluate_network(const GapCcotNet<double>&, const SensingOperator&,
                                      std::span<const SpectralCube>);
template std::vector<MaskRow> mask_flexibility_harness(const GapCcotNet<float>&,
                                                       std::span<const Mask>,
                                                       std::span<const SpectralCube>, std::size_t);
template std::vector<MaskRow> mask_flexibility_harness(const GapCcotNet<double>&,
                                                       std::span<const Mask>,
                                                       std::span<const SpectralCube>, std::size_t);

}  // namespace gapccot
